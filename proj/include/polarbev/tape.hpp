#pragma once

#include <functional>
#include <vector>

#include "polarbev/tensor.hpp"

namespace polarbev::tc {

// Reverse-mode tape. Forward ops push one closure per recorded operation in
// execution order; backward replays them in reverse, which is a valid
// topological order by construction. A tape is single-owner: record and
// backward happen on one logical thread.
template <typename T>
class Tape {
public:
    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    std::size_t size() const { return steps_.size(); }

    void clear() { steps_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays all recorded steps in reverse.
    // Leaf gradients must be zeroed by the caller beforehand; intermediate
    // gradients are zero-initialized at op creation.
    void backward(Tensor<T>& loss) {
        if (loss.numel() != 1) {
            throw DimensionError("backward expects a scalar loss, got shape " + shape_str(loss.shape()));
        }
        if (!loss.requires_grad()) {
            throw NumericalError("backward called on a loss that does not require grad");
        }
        loss.grad()[0] += T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
            (*it)();
        }
    }

private:
    std::vector<std::function<void()>> steps_;
    bool recording_ = true;
};

using TapeD = Tape<double>;
using TapeF = Tape<float>;

// RAII guard that pauses recording, for forward-only re-evaluations.
template <typename T>
class NoRecordGuard {
public:
    explicit NoRecordGuard(Tape<T>& tape) : tape_(tape), prev_(tape.recording()) { tape_.set_recording(false); }
    ~NoRecordGuard() { tape_.set_recording(prev_); }

private:
    Tape<T>& tape_;
    bool prev_;
};

} // namespace polarbev::tc
