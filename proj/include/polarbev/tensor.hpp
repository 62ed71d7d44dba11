#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "polarbev/common.hpp"

namespace polarbev::tc {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Dense row-major tensor. Copies are shallow handles onto the same buffers;
// clone() makes a deep, detached copy. The gradient buffer exists exactly
// when the tensor participates in differentiation.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(static_cast<std::size_t>(shape_numel(shape_)), T(0))) {}

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        for (auto& v : *t.data_) v = value;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<T> values) {
        if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<T>>(std::move(values));
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t numel() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

    std::span<T> values() { return {data_->data(), data_->size()}; }
    std::span<const T> values() const { return {data_->data(), data_->size()}; }
    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }

    T& at(std::int64_t flat) { return (*data_)[static_cast<std::size_t>(flat)]; }
    T at(std::int64_t flat) const { return (*data_)[static_cast<std::size_t>(flat)]; }

    T& operator()(std::int64_t i) { return at(i); }
    T& operator()(std::int64_t i, std::int64_t j) { return at(i * shape_[1] + j); }
    T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) {
        return at((i * shape_[1] + j) * shape_[2] + k);
    }
    T& operator()(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
        return at(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l);
    }
    T operator()(std::int64_t i) const { return at(i); }
    T operator()(std::int64_t i, std::int64_t j) const { return at(i * shape_[1] + j); }
    T operator()(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return at((i * shape_[1] + j) * shape_[2] + k);
    }
    T operator()(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
        return at(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l);
    }

    bool requires_grad() const { return grad_ != nullptr; }

    void set_requires_grad(bool on) {
        if (on && !grad_) {
            grad_ = std::make_shared<std::vector<T>>(data_->size(), T(0));
        } else if (!on) {
            grad_.reset();
        }
    }

    std::span<T> grad() {
        if (!grad_) throw NumericalError("tensor has no gradient buffer");
        return {grad_->data(), grad_->size()};
    }
    std::span<const T> grad() const {
        if (!grad_) throw NumericalError("tensor has no gradient buffer");
        return {grad_->data(), grad_->size()};
    }
    T* grad_data() { return grad_->data(); }
    const T* grad_data() const { return grad_->data(); }

    void zero_grad() {
        if (grad_) {
            for (auto& g : *grad_) g = T(0);
        }
    }

    // Shares data and gradient buffers; shape changes only.
    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != numel()) {
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        Tensor t(*this);
        t.shape_ = std::move(shape);
        return t;
    }

    // Deep copy, detached from gradients.
    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_->size());
        for (std::size_t i = 0; i < data_->size(); ++i) out[i] = static_cast<U>((*data_)[i]);
        return Tensor<U>::from_data(shape_, std::move(out));
    }

    bool same_buffer(const Tensor& other) const { return data_ == other.data_; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
    std::shared_ptr<std::vector<T>> grad_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

} // namespace polarbev::tc
