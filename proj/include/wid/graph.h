#ifndef WID_GRAPH_H
#define WID_GRAPH_H

#include <deque>
#include <functional>
#include <memory>

#include "wid/tensor.h"

namespace wid {

// Reverse-mode tape. A forward pass appends nodes in evaluation order;
// backward() walks the tape in reverse and lets each node scatter its
// output gradient into its parents.
template <typename T>
class Tape;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily
    bool requires_grad = false;
    std::vector<Node<T>*> parents;
    std::function<void(Node<T>*)> backward_fn;

    Tensor<T>& ensure_grad() {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
};

template <typename T>
class Tape {
public:
    Node<T>* leaf(Tensor<T> value, bool requires_grad) {
        auto* n = new_node();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return n;
    }

    Node<T>* make(Tensor<T> value, std::vector<Node<T>*> parents,
                  std::function<void(Node<T>*)> backward_fn) {
        auto* n = new_node();
        n->value = std::move(value);
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
        for (auto* p : n->parents)
            if (p->requires_grad) n->requires_grad = true;
        return n;
    }

    // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
    void backward(Node<T>* loss) {
        loss->ensure_grad().fill(T(1));
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>* n = it->get();
            if (!n->requires_grad || n->grad.empty() || !n->backward_fn) continue;
            n->backward_fn(n);
        }
    }

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    Node<T>* new_node() {
        nodes_.push_back(std::make_unique<Node<T>>());
        return nodes_.back().get();
    }

    std::deque<std::unique_ptr<Node<T>>> nodes_;
};

}  // namespace wid

#endif
