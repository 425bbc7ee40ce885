"""Lumped-parameter networks as oriented cell complexes.

A network is nodes (0-cells) and directed edges (1-cells) carrying one
component each; its signed incidence matrix is the boundary operator taking
edge quantities to node balances. Governing equations come out of operator
composition: coboundary (across-variable differences along edges), an
in-place constitutive map (the diagonal of edge parameters), and boundary
(balance at nodes). That composition is what :func:`assemble_mechanical` and
:func:`assemble_thermal` evaluate, so the same machinery covers force
balances in mass-spring-damper chains and heat balances in
resistor-capacitor ladders, plus one-way transformer coupling between them.

Of the eight possible state-variable choices for such networks only the two
canonical ones are implemented: nodal displacement (mechanical) and nodal
temperature (thermal).
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import TopologyError
from .lti import SecondOrderSystem, StateSpaceSystem, to_first_order

MECHANICAL = "mechanical"
THERMAL = "thermal"

MECH_ROLES = frozenset({"mass", "spring", "damper", "force_source"})
THERMAL_ROLES = frozenset({"thermal_resistor", "thermal_capacitor", "flux_source"})
SOURCE_ROLES = frozenset({"force_source", "flux_source"})
#: Roles whose edge must touch the ground node (storage and sources are
#: referenced to ground so M and C_th stay diagonal and nonsingular).
GROUNDED_ROLES = frozenset({"mass", "thermal_capacitor"})


@dataclass(frozen=True)
class Node:
    id: str
    domain: str
    is_ground: bool = False


@dataclass(frozen=True)
class Edge:
    id: str
    domain: str
    role: str
    tail: str
    head: str
    param_name: str


@dataclass(frozen=True)
class Transformer:
    """One-way coupling: force ``ratio * T(thermal_node)`` at ``mech_node``."""

    thermal_node: str
    mech_node: str
    ratio_param: str


@dataclass(frozen=True)
class IOSpec:
    """Source edges driven by the shared scalar input, and the output probe."""

    input_edges: tuple
    output_node: str
    output_quantity: str  # displacement | temperature


@dataclass
class CellComplex:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    transformers: list = field(default_factory=list)
    io: IOSpec | None = None

    def node(self, node_id: str) -> Node:
        for nd in self.nodes:
            if nd.id == node_id:
                return nd
        raise TopologyError(f"unknown node id {node_id!r}")

    def domain_nodes(self, domain: str, include_ground: bool = False):
        return [nd for nd in self.nodes if nd.domain == domain
                and (include_ground or not nd.is_ground)]

    def domain_edges(self, domain: str, roles=None):
        return [e for e in self.edges if e.domain == domain
                and (roles is None or e.role in roles)]

    def validate(self) -> None:
        seen_nodes = set()
        for nd in self.nodes:
            if nd.id in seen_nodes:
                raise TopologyError(f"duplicate node id {nd.id!r}")
            seen_nodes.add(nd.id)
            if nd.domain not in (MECHANICAL, THERMAL):
                raise TopologyError(f"node {nd.id!r}: unknown domain {nd.domain!r}")
        by_id = {nd.id: nd for nd in self.nodes}
        seen_edges = set()
        for e in self.edges:
            if e.id in seen_edges:
                raise TopologyError(f"duplicate edge id {e.id!r}")
            seen_edges.add(e.id)
            valid_roles = MECH_ROLES if e.domain == MECHANICAL else THERMAL_ROLES
            if e.domain not in (MECHANICAL, THERMAL):
                raise TopologyError(f"edge {e.id!r}: unknown domain {e.domain!r}")
            if e.role not in valid_roles:
                raise TopologyError(
                    f"edge {e.id!r}: role {e.role!r} is not a {e.domain} role"
                )
            for end in (e.tail, e.head):
                if end not in by_id:
                    raise TopologyError(f"edge {e.id!r}: unknown endpoint {end!r}")
                if by_id[end].domain != e.domain:
                    raise TopologyError(
                        f"edge {e.id!r}: endpoint {end!r} is in domain "
                        f"{by_id[end].domain!r}, edge is {e.domain!r}"
                    )
            if e.tail == e.head:
                raise TopologyError(f"edge {e.id!r}: tail and head coincide")
            if e.role in GROUNDED_ROLES:
                if not (by_id[e.tail].is_ground or by_id[e.head].is_ground):
                    raise TopologyError(
                        f"edge {e.id!r}: {e.role} must be incident to ground"
                    )
        for domain in (MECHANICAL, THERMAL):
            dnodes = [nd for nd in self.nodes if nd.domain == domain]
            if not dnodes:
                continue
            grounds = [nd for nd in dnodes if nd.is_ground]
            if len(grounds) != 1:
                raise TopologyError(
                    f"{domain} sub-complex needs exactly one ground node, "
                    f"found {len(grounds)}"
                )
            # connectivity of the domain graph to its ground
            adj = {nd.id: set() for nd in dnodes}
            for e in self.domain_edges(domain):
                adj[e.tail].add(e.head)
                adj[e.head].add(e.tail)
            reached = {grounds[0].id}
            stack = [grounds[0].id]
            while stack:
                for nb in adj[stack.pop()]:
                    if nb not in reached:
                        reached.add(nb)
                        stack.append(nb)
            unreached = sorted(set(adj) - reached)
            if unreached:
                raise TopologyError(
                    f"{domain} nodes not connected to ground: {unreached}"
                )
        for tf in self.transformers:
            tnode = by_id.get(tf.thermal_node)
            mnode = by_id.get(tf.mech_node)
            if tnode is None or tnode.domain != THERMAL or tnode.is_ground:
                raise TopologyError(
                    f"transformer thermal_node {tf.thermal_node!r} must be a "
                    "non-ground thermal node"
                )
            if mnode is None or mnode.domain != MECHANICAL or mnode.is_ground:
                raise TopologyError(
                    f"transformer mech_node {tf.mech_node!r} must be a "
                    "non-ground mechanical node"
                )
        if self.io is not None:
            sources = {e.id for e in self.edges if e.role in SOURCE_ROLES}
            for eid in self.io.input_edges:
                if eid not in sources:
                    raise TopologyError(f"io input edge {eid!r} is not a source edge")
            if set(self.io.input_edges) != sources:
                missing = sorted(sources - set(self.io.input_edges))
                raise TopologyError(
                    f"source edges not listed as io inputs: {missing}"
                )
            out = by_id.get(self.io.output_node)
            if out is None or out.is_ground:
                raise TopologyError(
                    f"io output node {self.io.output_node!r} must be a "
                    "non-ground node"
                )
            want = MECHANICAL if self.io.output_quantity == "displacement" else THERMAL
            if self.io.output_quantity not in ("displacement", "temperature"):
                raise TopologyError(
                    f"unknown output quantity {self.io.output_quantity!r}"
                )
            if out.domain != want:
                raise TopologyError(
                    f"output quantity {self.io.output_quantity!r} needs a "
                    f"{want} node, {out.id!r} is {out.domain}"
                )


def check_params(complex_: CellComplex, params: dict) -> None:
    """Every edge and transformer parameter must resolve to a positive value."""
    names = [e.param_name for e in complex_.edges]
    names += [tf.ratio_param for tf in complex_.transformers]
    for name in names:
        if name not in params:
            raise TopologyError(f"missing parameter {name!r}")
        value = params[name]
        if not (np.isfinite(value) and value > 0):
            raise TopologyError(f"parameter {name!r} must be positive, got {value}")


def incidence(complex_: CellComplex, domain: str, roles=None,
              drop_ground: bool = True) -> np.ndarray:
    """Signed node-edge incidence matrix of one domain sub-complex.

    Rows follow non-ground node declaration order (the ground row is dropped
    unless ``drop_ground=False``); columns follow edge declaration order
    restricted to ``roles``. Each column carries +1 at its head and -1 at its
    tail, so over the full matrix every column sums to zero.
    """
    nodes = complex_.domain_nodes(domain, include_ground=not drop_ground)
    index = {nd.id: i for i, nd in enumerate(nodes)}
    edges = complex_.domain_edges(domain, roles)
    D = np.zeros((len(nodes), len(edges)))
    for j, e in enumerate(edges):
        if e.head in index:
            D[index[e.head], j] = 1.0
        if e.tail in index:
            D[index[e.tail], j] = -1.0
    return D


def _node_storage(complex_: CellComplex, params: dict, domain: str, role: str,
                  what: str) -> np.ndarray:
    """Diagonal of per-node storage (masses or thermal capacitances)."""
    nodes = complex_.domain_nodes(domain)
    index = {nd.id: i for i, nd in enumerate(nodes)}
    diag = np.zeros(len(nodes))
    for e in complex_.domain_edges(domain, {role}):
        node_id = e.head if e.head in index else e.tail
        diag[index[node_id]] += params[e.param_name]
    missing = [nodes[i].id for i in range(len(nodes)) if diag[i] <= 0]
    if missing:
        raise TopologyError(f"nodes without {what}: {missing}")
    return diag


def _source_column(complex_: CellComplex, params: dict, domain: str,
                   index: dict) -> np.ndarray:
    col = np.zeros((len(index), 1))
    role = "force_source" if domain == MECHANICAL else "flux_source"
    for e in complex_.domain_edges(domain, {role}):
        gain = params[e.param_name]
        if e.head in index:
            col[index[e.head], 0] += gain
        if e.tail in index:
            col[index[e.tail], 0] -= gain
    return col


def assemble_mechanical(complex_: CellComplex, params: dict) -> SecondOrderSystem:
    """Second-order equations of the mechanical sub-complex.

    ``M`` is the diagonal of ground-referenced masses, and
    ``K = D_s diag(k) D_s^T`` / ``D_d diag(d) D_d^T`` realize the operator
    path: edge-wise relative displacement, constitutive scaling, force
    balance at each node. Force sources populate the input column (scaled by
    their gain parameter); the output is the io node's displacement.
    """
    complex_.validate()
    check_params(complex_, params)
    nodes = complex_.domain_nodes(MECHANICAL)
    if not nodes:
        raise TopologyError("no mechanical degrees of freedom")
    index = {nd.id: i for i, nd in enumerate(nodes)}
    M = np.diag(_node_storage(complex_, params, MECHANICAL, "mass", "attached mass"))
    Ds = incidence(complex_, MECHANICAL, {"spring"})
    ks = np.array([params[e.param_name]
                   for e in complex_.domain_edges(MECHANICAL, {"spring"})])
    K = Ds @ np.diag(ks) @ Ds.T if ks.size else np.zeros_like(M)
    Dd = incidence(complex_, MECHANICAL, {"damper"})
    ds = np.array([params[e.param_name]
                   for e in complex_.domain_edges(MECHANICAL, {"damper"})])
    D = Dd @ np.diag(ds) @ Dd.T if ds.size else np.zeros_like(M)
    F = _source_column(complex_, params, MECHANICAL, index)
    C_out = np.zeros((1, len(nodes)))
    if complex_.io is not None and complex_.io.output_node in index:
        C_out[0, index[complex_.io.output_node]] = 1.0
    return SecondOrderSystem(M, D, K, F, C_out)


def assemble_thermal(complex_: CellComplex, params: dict) -> StateSpaceSystem:
    """First-order heat balance ``C_th T' = -G_th T + q`` of the thermal part.

    ``G_th = D_r diag(1/R) D_r^T`` over resistor edges; every non-ground node
    must carry a capacitance to ground. Flux sources populate the input; the
    output is the io node's temperature (when it is thermal).
    """
    complex_.validate()
    check_params(complex_, params)
    nodes = complex_.domain_nodes(THERMAL)
    if not nodes:
        raise TopologyError("no thermal degrees of freedom")
    index = {nd.id: i for i, nd in enumerate(nodes)}
    C_th = np.diag(_node_storage(complex_, params, THERMAL, "thermal_capacitor",
                                 "thermal capacitance"))
    Dr = incidence(complex_, THERMAL, {"thermal_resistor"})
    rs = np.array([params[e.param_name]
                   for e in complex_.domain_edges(THERMAL, {"thermal_resistor"})])
    G = Dr @ np.diag(1.0 / rs) @ Dr.T if rs.size else np.zeros_like(C_th)
    q = _source_column(complex_, params, THERMAL, index)
    C = np.zeros((1, len(nodes)))
    if complex_.io is not None and complex_.io.output_node in index:
        C[0, index[complex_.io.output_node]] = 1.0
    return StateSpaceSystem(C_th, -G, q, C, validate=False)


def couple_transformer(mech: SecondOrderSystem, thermal: StateSpaceSystem,
                       transformers, ratios, mech_index: dict,
                       thermal_index: dict,
                       output=None) -> StateSpaceSystem:
    """Join the two physics over the block state (q, q', T).

    The transformer law is the linear one-way gain ``force = ratio * T``:
    temperatures load the structure while the thermal equations keep an
    exact zero block from the mechanical states.
    """
    n_m = mech.n_dof
    n_t = thermal.n
    N = np.zeros((n_m, n_t))
    for tf, ratio in zip(transformers, ratios):
        if tf.mech_node not in mech_index or tf.thermal_node not in thermal_index:
            raise TopologyError(
                f"transformer references unknown node(s) "
                f"{tf.mech_node!r}/{tf.thermal_node!r}"
            )
        N[mech_index[tf.mech_node], thermal_index[tf.thermal_node]] += ratio

    I = np.eye(n_m)
    E = np.zeros((2 * n_m + n_t, 2 * n_m + n_t))
    E[:n_m, :n_m] = I
    E[n_m:2 * n_m, n_m:2 * n_m] = np.asarray(mech.M)
    E[2 * n_m:, 2 * n_m:] = np.asarray(thermal.E)
    A = np.zeros_like(E)
    A[:n_m, n_m:2 * n_m] = I
    A[n_m:2 * n_m, :n_m] = -np.asarray(mech.K)
    A[n_m:2 * n_m, n_m:2 * n_m] = -np.asarray(mech.D)
    A[n_m:2 * n_m, 2 * n_m:] = N
    A[2 * n_m:, 2 * n_m:] = np.asarray(thermal.A)
    B = np.vstack([np.zeros((n_m, 1)), mech.F, thermal.B])
    if output is None:
        C = np.hstack([mech.C_out, np.zeros((1, n_m + n_t))])
    else:
        C = np.asarray(output, dtype=float).reshape(1, -1)
        if C.shape[1] != 2 * n_m + n_t:
            raise ValueError(f"output map has {C.shape[1]} columns, expected "
                             f"{2 * n_m + n_t}")
    return StateSpaceSystem(E, A, B, C, validate=False)


def generate_equations(complex_: CellComplex, params: dict,
                       state_choice: str) -> StateSpaceSystem:
    """Governing state equations of a validated complex.

    ``state_choice`` picks the across-variable the states live on:
    ``"displacement"`` (mechanical / coupled networks) or ``"temperature"``
    (thermal networks). The result equals the manual composition of
    :func:`assemble_mechanical`, :func:`assemble_thermal`,
    :func:`to_first_order` and :func:`couple_transformer`.
    """
    if state_choice not in ("displacement", "temperature"):
        raise NotImplementedError(
            f"state choice {state_choice!r} not implemented: of the eight "
            "state-variable options only 'displacement' and 'temperature' "
            "are supported"
        )
    complex_.validate()
    check_params(complex_, params)
    mech_nodes = complex_.domain_nodes(MECHANICAL)
    th_nodes = complex_.domain_nodes(THERMAL)
    if complex_.io is None:
        raise TopologyError("complex has no io specification")

    if mech_nodes and not th_nodes:
        if state_choice != "displacement":
            raise TopologyError("mechanical network requires state choice "
                                "'displacement'")
        return to_first_order(assemble_mechanical(complex_, params))
    if th_nodes and not mech_nodes:
        if state_choice != "temperature":
            raise TopologyError("thermal network requires state choice "
                                "'temperature'")
        return assemble_thermal(complex_, params)

    if state_choice != "displacement":
        raise TopologyError("coupled networks use state choice 'displacement'")
    mech = assemble_mechanical(complex_, params)
    thermal = assemble_thermal(complex_, params)
    mech_index = {nd.id: i for i, nd in enumerate(mech_nodes)}
    th_index = {nd.id: i for i, nd in enumerate(th_nodes)}
    ratios = [params[tf.ratio_param] for tf in complex_.transformers]
    n_m, n_t = len(mech_nodes), len(th_nodes)
    out = np.zeros(2 * n_m + n_t)
    if complex_.io.output_quantity == "displacement":
        out[mech_index[complex_.io.output_node]] = 1.0
    else:
        out[2 * n_m + th_index[complex_.io.output_node]] = 1.0
    return couple_transformer(mech, thermal, complex_.transformers, ratios,
                              mech_index, th_index, output=out)


_NODE_KEYS = {"id", "domain", "is_ground"}
_EDGE_KEYS = {"id", "domain", "role", "tail", "head", "param_name"}
_TF_KEYS = {"thermal_node", "mech_node", "ratio_param"}


def _strict(d: dict, allowed: set, required: set, what: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise TopologyError(f"{what}: unknown key(s) {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise TopologyError(f"{what}: missing key(s) {sorted(missing)}")


def complex_from_dict(data: dict):
    """Parse the topology-file dict into ``(CellComplex, params)``."""
    if not isinstance(data, dict):
        raise TopologyError("topology must be a JSON object")
    _strict(data, {"nodes", "edges", "transformers", "io", "params"},
            {"nodes", "edges", "io", "params"}, "topology")
    nodes = []
    for nd in data["nodes"]:
        _strict(nd, _NODE_KEYS, {"id", "domain"}, f"node {nd.get('id')!r}")
        nodes.append(Node(id=str(nd["id"]), domain=nd["domain"],
                          is_ground=bool(nd.get("is_ground", False))))
    edges = []
    for e in data["edges"]:
        _strict(e, _EDGE_KEYS, _EDGE_KEYS, f"edge {e.get('id')!r}")
        edges.append(Edge(id=str(e["id"]), domain=e["domain"], role=e["role"],
                          tail=str(e["tail"]), head=str(e["head"]),
                          param_name=str(e["param_name"])))
    transformers = []
    for tf in data.get("transformers", []):
        _strict(tf, _TF_KEYS, _TF_KEYS, "transformer")
        transformers.append(Transformer(thermal_node=str(tf["thermal_node"]),
                                        mech_node=str(tf["mech_node"]),
                                        ratio_param=str(tf["ratio_param"])))
    io_data = data["io"]
    _strict(io_data, {"input", "output"}, {"input", "output"}, "io")
    inp = io_data["input"]
    if "edges" in inp:
        input_edges = tuple(str(x) for x in inp["edges"])
    elif "edge" in inp:
        input_edges = (str(inp["edge"]),)
    else:
        raise TopologyError("io.input: needs 'edge' or 'edges'")
    out = io_data["output"]
    _strict(out, {"node", "quantity"}, {"node", "quantity"}, "io.output")
    io = IOSpec(input_edges=input_edges, output_node=str(out["node"]),
                output_quantity=str(out["quantity"]))
    params = data["params"]
    if not isinstance(params, dict):
        raise TopologyError("params must be an object of name -> value")
    params = {str(k): float(v) for k, v in params.items()}
    cc = CellComplex(nodes=nodes, edges=edges, transformers=transformers, io=io)
    cc.validate()
    check_params(cc, params)
    return cc, params


def complex_to_dict(complex_: CellComplex, params: dict) -> dict:
    """Normalized topology-file form (inverse of :func:`complex_from_dict`)."""
    return {
        "nodes": [{"id": nd.id, "domain": nd.domain, "is_ground": nd.is_ground}
                  for nd in complex_.nodes],
        "edges": [{"id": e.id, "domain": e.domain, "role": e.role,
                   "tail": e.tail, "head": e.head, "param_name": e.param_name}
                  for e in complex_.edges],
        "transformers": [{"thermal_node": tf.thermal_node,
                          "mech_node": tf.mech_node,
                          "ratio_param": tf.ratio_param}
                         for tf in complex_.transformers],
        "io": {"input": {"edges": list(complex_.io.input_edges)},
               "output": {"node": complex_.io.output_node,
                          "quantity": complex_.io.output_quantity}},
        "params": dict(sorted(params.items())),
    }


def load_topology(path):
    """Read a topology JSON file into ``(CellComplex, params)``."""
    with open(path) as fh:
        data = json.load(fh)
    return complex_from_dict(data)
