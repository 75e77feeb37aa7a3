#pragma once

#include <span>
#include <string>

#include "gpia/graph.hpp"

namespace gpia {

/// node: #(attr == value) > #(attr != value).
/// link_same: #edges whose endpoints share an attribute value > #other edges.
/// link_attr: #edges with both endpoints == value > #other edges.
enum class PropertyKind { node, link_same, link_attr };

struct PropertySpec {
  PropertyKind kind = PropertyKind::node;
  int attr_value = 1;
  std::string description;
};

using PropertyLabel = int;

/// Property of the subgraph with the given nodes and edges; edges must lie
/// inside `nodes`. Strict majority; ties map to 0.
inline PropertyLabel compute_property(std::span<const int> attr, std::span<const NodeId> nodes,
                                      const EdgeSet& edges, const PropertySpec& spec) {
  long long hit = 0, miss = 0;
  switch (spec.kind) {
    case PropertyKind::node:
      for (NodeId v : nodes) (attr[v] == spec.attr_value ? hit : miss)++;
      break;
    case PropertyKind::link_same:
      for (const auto& e : edges) (attr[e.u] == attr[e.v] ? hit : miss)++;
      break;
    case PropertyKind::link_attr:
      for (const auto& e : edges)
        (attr[e.u] == spec.attr_value && attr[e.v] == spec.attr_value ? hit : miss)++;
      break;
  }
  return hit > miss ? 1 : 0;
}

inline PropertyLabel compute_property(const AttributedGraph& g, const PropertySpec& spec) {
  return compute_property(g.property_attr(), g.all_nodes(), g.edges(), spec);
}

inline std::string to_string(PropertyKind kind) {
  switch (kind) {
    case PropertyKind::node: return "node";
    case PropertyKind::link_same: return "link-same";
    case PropertyKind::link_attr: return "link-attr";
  }
  return "node";
}

inline PropertyKind property_kind_from_string(const std::string& s) {
  if (s == "node") return PropertyKind::node;
  if (s == "link-same" || s == "link_same") return PropertyKind::link_same;
  if (s == "link-attr" || s == "link_attr") return PropertyKind::link_attr;
  fail(Errc::config, "unknown property kind '" + s + "'");
}

}  // namespace gpia
