#include "svfm/graph.hpp"

#include <algorithm>

#include "svfm/errors.hpp"

namespace svfm {

Tensor& ParamStore::add(std::string name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    Tensor grad = Tensor::zeros_like(value);
    entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad)});
    return entries_.back().value;
}

std::size_t ParamStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
    return it->second;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) std::fill(e.grad.storage().begin(), e.grad.storage().end(), 0.0);
}

std::vector<double> ParamStore::flat_values() const {
    std::vector<double> out;
    out.reserve(total_size());
    for (const auto& e : entries_) out.insert(out.end(), e.value.data().begin(), e.value.data().end());
    return out;
}

std::vector<double> ParamStore::flat_grads() const {
    std::vector<double> out;
    out.reserve(total_size());
    for (const auto& e : entries_) out.insert(out.end(), e.grad.data().begin(), e.grad.data().end());
    return out;
}

void ParamStore::set_flat_values(std::span<const double> values) {
    if (values.size() != total_size()) throw ShapeError("ParamStore::set_flat_values: size mismatch");
    std::size_t off = 0;
    for (auto& e : entries_) {
        std::copy_n(values.begin() + off, e.value.size(), e.value.storage().begin());
        off += e.value.size();
    }
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("constant: non-finite value");
    Node n;
    n.value = std::move(value);
    n.op = "constant";
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Graph::input(Tensor value) {
    Var v = constant(std::move(value));
    nodes_[v.id()].requires_grad = true;
    nodes_[v.id()].op = "input";
    return v;
}

Var Graph::param(ParamStore& store, const std::string& name) {
    const std::size_t index = store.index_of(name);
    const auto key = std::make_pair(static_cast<const ParamStore*>(&store), index);
    if (auto it = bound_.find(key); it != bound_.end()) return Var(this, it->second);
    Var v = input(store.entry(index).value);
    nodes_[v.id()].op = "param";
    bound_.emplace(key, v.id());
    bindings_.push_back(ParamBinding{&store, index, v.id()});
    return v;
}

Var Graph::record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward, const char* op) {
    if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
    Node n;
    n.value = std::move(value);
    n.op = op;
    for (NodeId id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Tensor& Graph::grad_slot(NodeId id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor::zeros_like(n.value);
        n.has_grad = true;
    }
    return n.grad;
}

void Graph::backward(const Var& root) {
    if (&root.graph() != this) throw std::invalid_argument("backward: root belongs to another graph");
    if (root.value().size() != 1) {
        throw ShapeError("backward: root must be scalar, got shape " + shape_str(root.shape()));
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    grad_slot(root.id())[0] = 1.0;
    for (NodeId id = root.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.backward) continue;
        n.backward(*this, id);
    }
}

Tensor Graph::grad(const Var& v) const {
    const Node& n = nodes_[v.id()];
    return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

void Graph::accumulate_param_grads() {
    for (const auto& b : bindings_) {
        const Node& n = nodes_[b.node];
        if (!n.has_grad) continue;
        auto& dst = b.store->entry(b.index).grad.storage();
        const auto src = n.grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
}

void backward(Graph& graph, const Var& root) {
    graph.backward(root);
    graph.accumulate_param_grads();
}

}  // namespace svfm
