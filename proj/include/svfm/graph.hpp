#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "svfm/tensor.hpp"

namespace svfm {

class Graph;

/// Named trainable tensors, each paired with a gradient accumulator of the
/// same shape. Iteration order is insertion order.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
    };

    Tensor& add(std::string name, Tensor value);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t index_of(const std::string& name) const;

    Entry& entry(std::size_t i) { return entries_.at(i); }
    const Entry& entry(std::size_t i) const { return entries_.at(i); }
    Entry& at(const std::string& name) { return entries_[index_of(name)]; }
    const Entry& at(const std::string& name) const { return entries_[index_of(name)]; }

    std::span<Entry> entries() { return entries_; }
    std::span<const Entry> entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t total_size() const;

    void zero_grad();

    // Flat views over every parameter value / gradient, in entry order.
    std::vector<double> flat_values() const;
    std::vector<double> flat_grads() const;
    void set_flat_values(std::span<const double> values);

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Handle to a node recorded on a Graph.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

    bool valid() const { return graph_ != nullptr; }
    Graph& graph() const { return *graph_; }
    std::uint32_t id() const { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    double item() const { return value().item(); }

private:
    Graph* graph_ = nullptr;
    std::uint32_t id_ = 0;
};

/// Append-only tape. Every node's inputs precede it, so reverse insertion
/// order is a valid topological order for the backward sweep.
class Graph {
public:
    using NodeId = std::uint32_t;
    // Called once during backward with the node's own id; reads grad_of(self)
    // and accumulates into its inputs through grad_slot().
    using BackwardFn = std::function<void(Graph&, NodeId)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var input(Tensor value);
    // Leaf bound to a ParamStore entry; the same entry maps to one node per graph.
    Var param(ParamStore& store, const std::string& name);

    Var record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward, const char* op);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const std::vector<NodeId>& inputs(NodeId id) const { return nodes_[id].inputs; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    const char* op_name(NodeId id) const { return nodes_[id].op; }
    std::size_t size() const { return nodes_.size(); }

    // Reverse sweep from a scalar root. Clears previous node gradients first.
    void backward(const Var& root);

    // Gradient of the last backward root w.r.t. `v`; zeros when unreachable.
    Tensor grad(const Var& v) const;

    // Used by backward functions.
    const Tensor& grad_of(NodeId id) const { return nodes_[id].grad; }
    Tensor& grad_slot(NodeId id);

    // Adds leaf gradients into the bound ParamStore gradient accumulators.
    void accumulate_param_grads();

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::vector<NodeId> inputs;
        BackwardFn backward;
        const char* op = "";
    };
    struct ParamBinding {
        ParamStore* store;
        std::size_t index;
        NodeId node;
    };

    std::vector<Node> nodes_;
    std::vector<ParamBinding> bindings_;
    std::map<std::pair<const ParamStore*, std::size_t>, NodeId> bound_;
};

/// Runs the reverse sweep from `root` and accumulates d(root)/d(param) into
/// every ParamStore bound to the graph. Parameters off the path receive zero.
void backward(Graph& graph, const Var& root);

}  // namespace svfm
