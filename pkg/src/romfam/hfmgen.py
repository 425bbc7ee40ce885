"""Desk-scale high-fidelity model generators: 1D finite-element rods.

Linear two-node elements with consistent mass/capacitance matrices. The
elastic rod is clamped at one end and pressure-loaded at the other; the heat
rod carries an end flux against a far-end reference temperature; the
thermo-elastic rod couples them one way (temperature loads the structure,
never the reverse). Rayleigh damping keeps every generated model dissipative,
which the cumulative reduction scheme requires.
"""

import json
from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy.sparse as sp

from .lti import SecondOrderSystem, StateSpaceSystem

_OUTPUTS = ("tip_displacement", "average_displacement")


def _positive(spec, names) -> None:
    for name in names:
        value = getattr(spec, name)
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class RodSpec:
    """Clamped elastic rod under end pressure (input u in Pa)."""

    n_elem: int
    length: float = 1.0
    area: float = 1.0
    youngs: float = 1.0
    density: float = 1.0
    rayleigh_alpha: float = 0.1
    rayleigh_beta: float = 1e-4
    output: str = "tip_displacement"

    def __post_init__(self):
        if self.n_elem < 1:
            raise ValueError(f"n_elem must be >= 1, got {self.n_elem}")
        _positive(self, ("length", "area", "youngs", "density",
                         "rayleigh_alpha", "rayleigh_beta"))
        if self.output not in _OUTPUTS:
            raise ValueError(f"output must be one of {_OUTPUTS}, got {self.output!r}")


@dataclass(frozen=True)
class ThermalRodSpec:
    """Conducting rod with an end heat flux, reference temperature far end."""

    n_elem: int
    length: float = 1.0
    area: float = 1.0
    conductivity: float = 1.0
    vol_heat_capacity: float = 1.0
    flux: float = 1.0

    def __post_init__(self):
        if self.n_elem < 1:
            raise ValueError(f"n_elem must be >= 1, got {self.n_elem}")
        _positive(self, ("length", "area", "conductivity", "vol_heat_capacity",
                         "flux"))


@dataclass(frozen=True)
class CoupledRodSpec:
    """One-way thermo-elastic rod: pressure and end flux share one step input.

    The single input column combines ``pressure`` (Pa, on the free end) and
    ``flux`` (W, into the free end) so the coupled model stays single-input
    for the reduction path.
    """

    n_elem: int
    length: float = 1.0
    area: float = 1.0
    youngs: float = 1.0
    density: float = 1.0
    rayleigh_alpha: float = 0.1
    rayleigh_beta: float = 1e-4
    output: str = "tip_displacement"
    conductivity: float = 1.0
    vol_heat_capacity: float = 1.0
    flux: float = 1.0
    thermal_expansion: float = 1e-5
    pressure: float = 1.0

    def __post_init__(self):
        if self.n_elem < 1:
            raise ValueError(f"n_elem must be >= 1, got {self.n_elem}")
        _positive(self, ("length", "area", "youngs", "density",
                         "rayleigh_alpha", "rayleigh_beta", "conductivity",
                         "vol_heat_capacity", "flux", "thermal_expansion",
                         "pressure"))
        if self.output not in _OUTPUTS:
            raise ValueError(f"output must be one of {_OUTPUTS}, got {self.output!r}")


def _bar_matrices(n_elem: int, coeff_stiff: float, coeff_mass: float):
    """Assembled full (n_elem+1)-node tridiagonal stiffness/mass pair.

    Element matrices are ``coeff_stiff * [[1, -1], [-1, 1]]`` and
    ``coeff_mass/6 * [[2, 1], [1, 2]]`` (consistent mass).
    """
    n_nodes = n_elem + 1
    main_k = np.full(n_nodes, 2.0 * coeff_stiff)
    main_k[0] = main_k[-1] = coeff_stiff
    off_k = np.full(n_nodes - 1, -coeff_stiff)
    K = sp.diags([off_k, main_k, off_k], [-1, 0, 1], format="csr")
    main_m = np.full(n_nodes, 4.0 * coeff_mass / 6.0)
    main_m[0] = main_m[-1] = 2.0 * coeff_mass / 6.0
    off_m = np.full(n_nodes - 1, coeff_mass / 6.0)
    M = sp.diags([off_m, main_m, off_m], [-1, 0, 1], format="csr")
    return K, M


def _drop(M: sp.spmatrix, node: int) -> sp.csr_matrix:
    keep = np.ones(M.shape[0], dtype=bool)
    keep[node] = False
    return M.tocsr()[keep][:, keep]


def _mech_output(spec, n_dof: int) -> np.ndarray:
    C = np.zeros((1, n_dof))
    if spec.output == "tip_displacement":
        C[0, -1] = 1.0
    else:
        C[0, :] = 1.0 / n_dof
    return C


def rod_elastic(spec: RodSpec) -> SecondOrderSystem:
    """Clamped-free elastic rod; the input is the end pressure in Pa.

    The static tip displacement under pressure P is exactly P L / (E A) for
    any element count (linear elements are exact for an end load).
    """
    h = spec.length / spec.n_elem
    K_full, M_full = _bar_matrices(
        spec.n_elem,
        spec.youngs * spec.area / h,
        spec.density * spec.area * h,
    )
    K = _drop(K_full, 0)
    M = _drop(M_full, 0)
    D = spec.rayleigh_alpha * M + spec.rayleigh_beta * K
    n_dof = spec.n_elem
    F = np.zeros((n_dof, 1))
    F[-1, 0] = spec.area  # force = pressure * area at the free end
    return SecondOrderSystem(M, D, K, F, _mech_output(spec, n_dof))


def rod_heat(spec: ThermalRodSpec) -> StateSpaceSystem:
    """Transient heat conduction ``C_th T' = -K_th T + f``.

    Flux enters at node 0 and the far end is held at the reference
    temperature; the steady temperature at the flux end is exactly
    ``flux * length / (conductivity * area)``. Input u scales the flux, the
    output is the flux-end temperature.
    """
    h = spec.length / spec.n_elem
    G_full, C_full = _bar_matrices(
        spec.n_elem,
        spec.conductivity * spec.area / h,
        spec.vol_heat_capacity * spec.area * h,
    )
    G = _drop(G_full, spec.n_elem)
    C_th = _drop(C_full, spec.n_elem)
    n_dof = spec.n_elem
    B = np.zeros((n_dof, 1))
    B[0, 0] = spec.flux
    C = np.zeros((1, n_dof))
    C[0, 0] = 1.0
    return StateSpaceSystem(C_th.tocsc(), (-G).tocsc(), B, C, validate=False)


def _thermal_coupling(spec: CoupledRodSpec) -> np.ndarray:
    """Thermal-strain load map H with f_mech = H @ T.

    Element-averaged temperatures drive the usual thermal load vector
    ``E A alpha * Tbar * [-1, +1]``. Mechanical DOFs are nodes 1..n (node 0
    clamped); thermal DOFs are nodes 1..n (node 0 at reference zero), so the
    two index spaces coincide.
    """
    n = spec.n_elem
    c = spec.youngs * spec.area * spec.thermal_expansion
    H = np.zeros((n, n))
    for e in range(n):  # element e spans nodes e, e+1
        # Tbar_e = (T[e] + T[e+1]) / 2 with T[0] = 0
        weights = []
        if e >= 1:
            weights.append((e - 1, 0.5))
        weights.append((e, 0.5))
        for dof, w in weights:
            if e >= 1:
                H[e - 1, dof] -= c * w  # node e side
            H[e, dof] += c * w  # node e+1 side
    return H


def rod_thermoelastic(spec: CoupledRodSpec) -> StateSpaceSystem:
    """One-way coupled rod over the block state (q, q', T).

    The thermal block evolves independently of the mechanical states (the A
    matrix has an exact zero block from mechanics into the thermal
    equations); temperature feeds back into the structure through the
    thermal-strain load. Pressure and flux are collapsed into one combined
    input column scaled by their spec magnitudes.
    """
    h = spec.length / spec.n_elem
    n = spec.n_elem

    K_full, M_full = _bar_matrices(n, spec.youngs * spec.area / h,
                                   spec.density * spec.area * h)
    K = _drop(K_full, 0)
    M = _drop(M_full, 0)
    D = spec.rayleigh_alpha * M + spec.rayleigh_beta * K

    G_full, Cth_full = _bar_matrices(n, spec.conductivity * spec.area / h,
                                     spec.vol_heat_capacity * spec.area * h)
    G = _drop(G_full, 0)  # reference temperature at the clamped end
    C_th = _drop(Cth_full, 0)

    H = sp.csr_matrix(_thermal_coupling(spec))
    I = sp.eye(n, format="csr")
    Z = sp.csr_matrix((n, n))
    E = sp.block_diag([I, M, C_th], format="csc")
    A = sp.bmat([
        [Z, I, Z],
        [-K, -D, H],
        [None, None, -G],
    ], format="csc")

    B = np.zeros((3 * n, 1))
    B[2 * n - 1, 0] = spec.pressure * spec.area  # pressure force at free end
    B[3 * n - 1, 0] = spec.flux  # heat flux at free end
    C = np.zeros((1, 3 * n))
    C[0, :n] = _mech_output(spec, n)
    return StateSpaceSystem(E, A, B, C, validate=False)


_SPEC_KINDS = {
    "rod": RodSpec,
    "thermal_rod": ThermalRodSpec,
    "coupled_rod": CoupledRodSpec,
}


def parse_rod_spec(data: dict):
    """Build the matching spec dataclass from a plain dict.

    The kind is inferred from the fields present (``thermal_expansion`` means
    coupled, ``conductivity`` without ``youngs`` means thermal, ``youngs``
    means elastic); an explicit ``"kind"`` key is honored when given.
    """
    if not isinstance(data, dict):
        raise ValueError(f"spec must be a JSON object, got {type(data).__name__}")
    data = dict(data)
    kind = data.pop("kind", None)
    if kind is None:
        if "thermal_expansion" in data:
            kind = "coupled_rod"
        elif "conductivity" in data and "youngs" not in data:
            kind = "thermal_rod"
        elif "youngs" in data:
            kind = "rod"
        else:
            raise ValueError(
                "cannot infer spec kind: expected field 'youngs', "
                "'conductivity', or 'thermal_expansion'"
            )
    cls = _SPEC_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown spec kind {kind!r}; expected one of "
                         f"{sorted(_SPEC_KINDS)}")
    valid = {f.name for f in fields(cls)}
    unknown = set(data) - valid
    if unknown:
        raise ValueError(f"unknown field(s) for {kind} spec: {sorted(unknown)}")
    if "n_elem" not in data:
        raise ValueError("missing required field 'n_elem'")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ValueError(f"invalid {kind} spec: {exc}") from exc


def load_rod_spec(path):
    """Read a rod spec JSON file."""
    with open(path) as fh:
        data = json.load(fh)
    return parse_rod_spec(data)


def spec_to_dict(spec) -> dict:
    """Spec dataclass back to a plain dict including its kind tag."""
    for kind, cls in _SPEC_KINDS.items():
        if isinstance(spec, cls):
            return {"kind": kind, **asdict(spec)}
    raise TypeError(f"not a rod spec: {type(spec).__name__}")


def build_system(spec):
    """Generate the first-order model for any rod spec."""
    if isinstance(spec, CoupledRodSpec):
        return rod_thermoelastic(spec)
    if isinstance(spec, ThermalRodSpec):
        return rod_heat(spec)
    if isinstance(spec, RodSpec):
        from .lti import to_first_order

        return to_first_order(rod_elastic(spec))
    raise TypeError(f"not a rod spec: {type(spec).__name__}")
