#ifndef WID_TENSOR_H
#define WID_TENSOR_H

#include <cassert>
#include <cstdint>
#include <memory>
#include <vector>

namespace wid {

// Dense row-major tensor. Copies are shallow (shared buffer); nodes on the
// autodiff tape are write-once, so sharing is safe. Use clone() for a deep copy.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        buf_ = std::make_shared<std::vector<T>>(count_elems(shape_), T(0));
    }

    Tensor(std::vector<int> shape, std::vector<T> values) : shape_(std::move(shape)) {
        assert((int64_t)values.size() == count_elems(shape_));
        buf_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    bool empty() const { return !buf_; }
    int rank() const { return (int)shape_.size(); }
    int dim(int i) const { return shape_[i]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return buf_ ? (int64_t)buf_->size() : 0; }

    T* data() { return buf_->data(); }
    const T* data() const { return buf_->data(); }
    T& operator[](int64_t i) { return (*buf_)[i]; }
    const T& operator[](int64_t i) const { return (*buf_)[i]; }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = std::make_shared<std::vector<T>>(*buf_);
        return t;
    }

    // Same buffer, new shape (numel must match).
    Tensor reshaped(std::vector<int> shape) const {
        assert(count_elems(shape) == numel());
        Tensor t;
        t.shape_ = std::move(shape);
        t.buf_ = buf_;
        return t;
    }

    bool shares_buffer(const Tensor& o) const { return buf_ == o.buf_; }

    void fill(T v) { std::fill(buf_->begin(), buf_->end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t{shape_};
        for (int64_t i = 0; i < numel(); ++i) t[i] = (U)(*buf_)[i];
        return t;
    }

    static int64_t count_elems(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<T>> buf_;
};

}  // namespace wid

#endif
