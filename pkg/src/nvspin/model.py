"""Static Hamiltonian of the register and its eigen-analysis.

The model covers one vacancy electron spin with zero-field splitting and
strain, nuclear Zeeman terms, the axially symmetric nitrogen hyperfine
coupling, and the full carbon hyperfine tensor rotated into the defect
frame. Energies are MHz, magnetic fields mT, angles radians.

Carbon coupling input comes in two frames. In the principal frame the
tensor is diagonal (c_parallel, c_perp, c_perp) along the carbon bond
axis tilted by theta from the defect axis; rotating by theta about x
produces four defect-frame coefficients

    par(theta)   = c_parallel cos^2(theta) + c_perp sin^2(theta)
    perp(theta)  = (c_perp (1 + cos^2(theta)) + c_parallel sin^2(theta)) / 2
    raise(theta) = (c_perp (1 - cos^2(theta)) - c_parallel sin^2(theta)) / 2
    cross(theta) = (c_perp - c_parallel) sin(theta) cos(theta)

which satisfy par + 2 perp = c_parallel + 2 c_perp. Alternatively the
four defect-frame numbers can be passed directly, which also allows
flipping the sign of the cross coefficient (rounded literature values
circulate with either sign).
"""

from dataclasses import dataclass, replace

import numpy as np

from nvspin import spincore as sc

ZERO_FIELD_SPLITTING = 2880.0  # MHz
GAMMA_E = 28.0                 # MHz/mT
GAMMA_C = 0.0106               # MHz/mT
GAMMA_N = -0.0043              # MHz/mT
N_PARALLEL = 3.03              # MHz
N_PERP = 3.65                  # MHz

C_PARALLEL_NN = 199.0
C_PERP_NN = 123.0
C_PARALLEL_THIRD = 18.5
C_PERP_THIRD = 13.26

# bond directions in ideal diamond coordinates: nearest neighbor along a
# tetrahedral bond, third neighbor in the basal plane of the defect axis
THETA_NN = float(np.arccos(-1.0 / 3.0))
THETA_THIRD = float(np.arccos(1.0 / np.sqrt(33.0)))

# working points used throughout: low field per site, shared medium field
FIELD_LOW_NN = 1.1    # mT
FIELD_LOW_THIRD = 2.0
FIELD_MED = 25.0


class TrackingError(RuntimeError):
    """Adiabatic level tracking lost a branch (grid too coarse)."""


def nv_frame_coefficients(c_parallel, c_perp, theta):
    """Rotate principal hyperfine values by theta into the defect frame.

    Returns the (parallel, perpendicular, double-raising, z-y cross)
    coefficients in MHz.
    """
    ct = np.cos(theta)
    st = np.sin(theta)
    c_par_t = c_parallel * ct * ct + c_perp * st * st
    c_perp_t = 0.5 * (c_perp * (1.0 + ct * ct) + c_parallel * st * st)
    c_raise = 0.5 * (c_perp * (1.0 - ct * ct) - c_parallel * st * st)
    c_cross = (c_perp - c_parallel) * st * ct
    return float(c_par_t), float(c_perp_t), float(c_raise), float(c_cross)


@dataclass(frozen=True)
class HyperfineTensor:
    """Carbon hyperfine coupling, in either input frame.

    frame="principal": c_parallel/c_perp are the principal values and
    theta is the bond tilt; the defect-frame coefficients are derived.
    frame="nv_frame": c_parallel/c_perp are already the defect-frame
    parallel/perpendicular coefficients and c_raise/c_cross are given
    explicitly (theta is ignored).
    """

    c_parallel: float
    c_perp: float
    frame: str = "principal"
    theta: float = 0.0
    c_raise: float = 0.0
    c_cross: float = 0.0

    def __post_init__(self):
        if self.frame not in ("principal", "nv_frame"):
            raise ValueError(f"unknown hyperfine frame {self.frame!r}")

    def defect_frame(self):
        """The four defect-frame coefficients (par, perp, raise, cross)."""
        if self.frame == "principal":
            return nv_frame_coefficients(self.c_parallel, self.c_perp, self.theta)
        return (self.c_parallel, self.c_perp, self.c_raise, self.c_cross)


HYPERFINE_NN = HyperfineTensor(C_PARALLEL_NN, C_PERP_NN, "principal", THETA_NN)
HYPERFINE_THIRD = HyperfineTensor(C_PARALLEL_THIRD, C_PERP_THIRD, "principal", THETA_THIRD)


@dataclass(frozen=True)
class RegisterModel:
    """Static parameters of the three-spin register."""

    field_mt: float
    zero_field_splitting: float = ZERO_FIELD_SPLITTING
    strain: float = 0.0
    gamma_e: float = GAMMA_E
    gamma_c: float = GAMMA_C
    gamma_n: float = GAMMA_N
    n_parallel: float = N_PARALLEL
    n_perp: float = N_PERP
    carbon: HyperfineTensor = HYPERFINE_NN
    site: str = "custom"

    def __post_init__(self):
        if self.zero_field_splitting <= 0:
            raise ValueError("zero-field splitting must be positive")
        if self.field_mt < 0:
            raise ValueError("axial field must be non-negative")
        if self.site not in ("nearest_neighbor", "third_neighbor", "custom"):
            raise ValueError(f"unknown site {self.site!r}")


def nearest_neighbor_model(field_mt, strain=0.0):
    """Preset with the carbon on a bond adjacent to the vacancy."""
    return RegisterModel(field_mt=field_mt, strain=strain,
                         carbon=HYPERFINE_NN, site="nearest_neighbor")


def third_neighbor_model(field_mt, strain=0.0):
    """Preset with the carbon on a planar third-neighbor site."""
    return RegisterModel(field_mt=field_mt, strain=strain,
                         carbon=HYPERFINE_THIRD, site="third_neighbor")


def build_static_hamiltonian(model):
    """Assemble the 12x12 static Hamiltonian in MHz."""
    v = sc.SPIN1
    i = sc.SPIN_HALF
    sz = sc.embed(v.sz, "V")
    sy = sc.embed(v.sy, "V")
    sp = sc.embed(v.s_plus, "V")
    sm = sc.embed(v.s_minus, "V")
    cz = sc.embed(i.sz, "C")
    cy = sc.embed(i.sy, "C")
    cp = sc.embed(i.s_plus, "C")
    cm = sc.embed(i.s_minus, "C")
    nz = sc.embed(i.sz, "N")
    np_ = sc.embed(i.s_plus, "N")
    nm = sc.embed(i.s_minus, "N")

    h = model.zero_field_splitting * (sz @ sz)
    h += 0.5 * model.strain * (sc.embed(v.sx @ v.sx - v.sy @ v.sy, "V"))
    h += model.gamma_e * model.field_mt * sz
    h += model.gamma_c * model.field_mt * cz
    h += model.gamma_n * model.field_mt * nz

    h += model.n_parallel * (sz @ nz)
    h += 0.5 * model.n_perp * (sp @ nm + sm @ np_)

    c_par, c_perp, c_raise, c_cross = model.carbon.defect_frame()
    h += c_par * (sz @ cz)
    h += 0.5 * c_perp * (sp @ cm + sm @ cp)
    h += 0.5 * c_raise * (sp @ cp + sm @ cm)
    h += c_cross * (sz @ cy + sy @ cz)
    return h


def eigensystem(model):
    """Eigenvalues (ascending, MHz) and eigenvector columns."""
    h = build_static_hamiltonian(model)
    return np.linalg.eigh(h)


def z_fidelity(eigenvector):
    """Largest overlap-squared with any product basis state."""
    v = np.asarray(eigenvector)
    return float(np.max(np.abs(v) ** 2))


def dominant_label(eigenvector):
    """Basis label (m_S, m_C, m_N) of the largest component."""
    idx = int(np.argmax(np.abs(np.asarray(eigenvector)) ** 2))
    return sc.BASIS_LABELS[idx]


def _fix_gauge(vecs):
    # make the largest component of each column real positive
    out = vecs.copy()
    for k in range(out.shape[1]):
        j = int(np.argmax(np.abs(out[:, k])))
        phase = out[j, k] / abs(out[j, k])
        out[:, k] = out[:, k] / phase
    return out


@dataclass(frozen=True)
class LevelScan:
    """Adiabatically tracked spectrum over a field grid."""

    b_grid: np.ndarray            # (n,) mT
    energies: np.ndarray          # (n, 12) MHz, column = tracked branch
    eigenvectors: np.ndarray      # (n, 12, 12), [:, :, k] = branch k
    z_fidelities: np.ndarray      # (n, 12)

    def to_csv(self):
        lines = ["B_mT,level_index,energy_MHz,z_fidelity"]
        for ib, b in enumerate(self.b_grid):
            for k in range(self.energies.shape[1]):
                lines.append("%.9g,%d,%.9g,%.9g" % (
                    b, k, self.energies[ib, k], self.z_fidelities[ib, k]))
        return "\n".join(lines) + "\n"


def scan_levels(model, b_grid, overlap_threshold=0.5):
    """Track the 12 levels along a strictly increasing field grid.

    Branches are continued by maximal successive eigenvector overlap
    (optimal assignment, energy proximity as tie-break). A successive
    overlap below `overlap_threshold` raises TrackingError.
    """
    from scipy.optimize import linear_sum_assignment

    b_grid = np.asarray(b_grid, dtype=float)
    if b_grid.ndim != 1 or len(b_grid) < 2:
        raise ValueError("need a one-dimensional grid of at least two fields")
    if np.any(np.diff(b_grid) <= 0):
        raise ValueError("field grid must be strictly increasing")

    n = len(b_grid)
    energies = np.empty((n, sc.DIM))
    vectors = np.empty((n, sc.DIM, sc.DIM), dtype=complex)

    prev = None
    for ib, b in enumerate(b_grid):
        m = _with_field(model, b)
        vals, vecs = eigensystem(m)
        if prev is None:
            order = np.arange(sc.DIM)
        else:
            ov = np.abs(prev.conj().T @ vecs) ** 2            # (branch, new)
            de = np.abs(energies[ib - 1][:, None] - vals[None, :])
            cost = -ov + 1e-9 * de / (1.0 + de)
            rows, cols = linear_sum_assignment(cost)
            order = np.empty(sc.DIM, dtype=int)
            order[rows] = cols
            worst = ov[rows, cols].min()
            if worst < overlap_threshold:
                raise TrackingError(
                    f"branch overlap {worst:.3f} below {overlap_threshold} "
                    f"between B={b_grid[ib - 1]:.6g} and {b:.6g} mT")
        energies[ib] = vals[order]
        vectors[ib] = _fix_gauge(vecs[:, order])
        prev = vectors[ib]

    zf = np.max(np.abs(vectors) ** 2, axis=1)
    return LevelScan(b_grid, energies, vectors, zf)


def _with_field(model, field_mt):
    if model.field_mt == field_mt:
        return model
    return replace(model, field_mt=field_mt)


def transition_table(model, threshold=1e-6):
    """All 66 level-pair frequencies with a drive-allowed flag.

    Levels are indexed in ascending energy order at the model's field.
    The flag is true when the magnetic drive operator has a matrix
    element above `threshold` between the two eigenvectors.
    """
    from nvspin.pulses import drive_operator

    vals, vecs = eigensystem(model)
    vd = vecs.conj().T @ drive_operator(model) @ vecs
    table = []
    for i in range(sc.DIM):
        for j in range(i + 1, sc.DIM):
            elem = abs(vd[i, j])
            table.append(((i, j), float(vals[j] - vals[i]), elem > threshold))
    return table


def transition_element(model, level_pair):
    """Drive matrix element magnitude between two eigenlevels."""
    from nvspin.pulses import drive_operator

    vals, vecs = eigensystem(model)
    i, j = level_pair
    return float(abs(vecs[:, i].conj() @ drive_operator(model) @ vecs[:, j]))


# -- avoided-crossing analysis ------------------------------------------

def _block_mean_difference(model, b):
    # mean diagonal energy of the m_S = 0 quartet minus the m_S = -1 one
    h = build_static_hamiltonian(_with_field(model, b))
    d = np.real(np.diag(h))
    return float(d[4:8].mean() - d[8:12].mean())


def exchange_crossing_field(model, b_lo=60.0, b_hi=140.0, tol=1e-9):
    """Field where the bare m_S = 0 and m_S = -1 quartets cross.

    Uses the quartet-mean diagonal energies of the assembled
    Hamiltonian, which removes the hyperfine fine structure; the
    crossing is made avoided by the perpendicular couplings.
    """
    f_lo = _block_mean_difference(model, b_lo)
    f_hi = _block_mean_difference(model, b_hi)
    if f_lo * f_hi > 0:
        raise ValueError(f"no quartet crossing in [{b_lo}, {b_hi}] mT")
    while b_hi - b_lo > tol:
        mid = 0.5 * (b_lo + b_hi)
        if f_lo * _block_mean_difference(model, mid) <= 0:
            b_hi = mid
        else:
            b_lo = mid
    return 0.5 * (b_lo + b_hi)


def _dominant_ms_weights(vecs):
    # (3, n_levels) projector weights onto the m_S = +1, 0, -1 quartets
    p = np.abs(vecs) ** 2
    return np.stack([p[0:4].sum(axis=0), p[4:8].sum(axis=0), p[8:12].sum(axis=0)])


def exchange_gap_profile(model, b_grid):
    """Minimum gap between 0-dominant and (-1)-dominant levels per field.

    Returns (b_grid, gaps). The profile minimum marks the avoided
    exchange crossing; with strong carbon coupling the eight levels mix
    and the apparent minimum shifts a few mT below the quartet-mean
    crossing.
    """
    b_grid = np.asarray(b_grid, dtype=float)
    gaps = np.empty(len(b_grid))
    for ib, b in enumerate(b_grid):
        vals, vecs = eigensystem(_with_field(model, b))
        cls = np.argmax(_dominant_ms_weights(vecs), axis=0)
        e0 = vals[cls == 1]
        e1 = vals[cls == 2]
        if len(e0) == 0 or len(e1) == 0:
            gaps[ib] = np.nan
            continue
        gaps[ib] = np.abs(e0[:, None] - e1[None, :]).min()
    return b_grid, gaps


@dataclass(frozen=True)
class CrossingRecord:
    """One avoided crossing between two tracked branches."""

    field_mt: float
    gap_mhz: float
    branch_low: int
    branch_high: int


def strain_crossing_records(model, b_lo, b_hi, points=1701, refine=2,
                            max_gap_mhz=10.0):
    """Avoided crossings between m_S = +1 and m_S = -1 branches.

    Tracks all levels over [b_lo, b_hi], classifies branches by their
    dominant vacancy projection at the lower edge, and records every
    interior minimum of the pairwise branch distance, refined on a
    locally denser grid. Broad sags above `max_gap_mhz` are dropped;
    records are sorted by field.
    """
    scan = scan_levels(model, np.linspace(b_lo, b_hi, points),
                       overlap_threshold=0.25)
    cls = np.argmax(_dominant_ms_weights(scan.eigenvectors[0]), axis=0)
    plus = np.flatnonzero(cls == 0)
    minus = np.flatnonzero(cls == 2)

    step = scan.b_grid[1] - scan.b_grid[0]
    w = max(3, points // 100)
    slope = 2.0 * model.gamma_e  # relative Zeeman slope of +1 vs -1 branches

    records = []
    for p in plus:
        for q in minus:
            dist = np.abs(scan.energies[:, p] - scan.energies[:, q])
            for k in range(1, len(dist) - 1):
                if dist[k] < dist[k - 1] and dist[k] <= dist[k + 1]:
                    # keep only hyperbola-shaped minima: a crossing rises
                    # like sqrt(g^2 + (slope*x)^2), a broad repulsion sag
                    # between non-crossing branches rises much slower
                    keep = True
                    for kk in (max(0, k - w), min(len(dist) - 1, k + w)):
                        x = abs(scan.b_grid[kk] - scan.b_grid[k])
                        expect = np.hypot(dist[k], slope * x) - dist[k]
                        if dist[kk] - dist[k] < 0.5 * expect:
                            keep = False
                    if not keep:
                        continue
                    b_c, gap = _refine_pair_minimum(
                        model, scan.b_grid[k - 1], scan.b_grid[k + 1],
                        scan.energies[k - 1, p], scan.energies[k - 1, q],
                        refine)
                    if gap <= max_gap_mhz:
                        records.append(
                            CrossingRecord(b_c, gap, min(p, q), max(p, q)))
    records.sort(key=lambda r: (r.field_mt, r.gap_mhz))
    merged = []
    for rec in records:
        if merged and abs(rec.field_mt - merged[-1].field_mt) < 1e-6 \
                and abs(rec.gap_mhz - merged[-1].gap_mhz) < 1e-6:
            continue
        merged.append(rec)
    return merged


def _refine_pair_minimum(model, b_lo, b_hi, e_p, e_q, levels):
    # zoom into one bracket; the two branches are re-identified at each
    # zoom by their energies at the bracket start, so diabatic index
    # swaps in the outer scan cannot leak in
    for _ in range(levels + 1):
        grid = np.linspace(b_lo, b_hi, 41)
        local = scan_levels(model, grid, overlap_threshold=0.0)
        p = int(np.argmin(np.abs(local.energies[0] - e_p)))
        q = int(np.argmin(np.abs(local.energies[0] - e_q)))
        if p == q:
            order = np.argsort(np.abs(local.energies[0] - e_q))
            q = int(order[1])
        dist = np.abs(local.energies[:, p] - local.energies[:, q])
        k = int(np.argmin(dist))
        lo = max(0, k - 1)
        hi = min(len(grid) - 1, k + 1)
        b_lo, b_hi = grid[lo], grid[hi]
        e_p, e_q = local.energies[lo, p], local.energies[lo, q]
    # parabolic interpolation through the innermost bracket
    k = int(np.clip(k, 1, len(grid) - 2))
    y0, y1, y2 = dist[k - 1], dist[k], dist[k + 1]
    denom = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if abs(denom) > 1e-15 else 0.0
    shift = float(np.clip(shift, -1.0, 1.0))
    step = grid[1] - grid[0]
    gap = y1 - 0.25 * (y0 - y2) * shift
    return float(grid[k] + shift * step), float(gap)


def strain_crossing_center(model):
    """Field where the strain-coupled diabatic lines cross.

    The strain term connects (+1, m_C, m_N) to (-1, m_C, m_N); those
    diagonal energies cross at |par(theta)| / (2 gamma_e) up to the
    nitrogen substructure of +- n_parallel / (2 gamma_e).
    """
    c_par = model.carbon.defect_frame()[0]
    return abs(c_par) / (2.0 * model.gamma_e)


@dataclass(frozen=True)
class CrossingReport:
    """Summary of the avoided crossings of a register preset."""

    exchange_field_mt: float
    exchange_gap_field_mt: float
    exchange_gap_mhz: float
    strain_center_mt: float
    strain_records: tuple


def crossing_report(model, strain_window=None):
    """Exchange crossing plus low-field strain-window records."""
    b_x = exchange_crossing_field(model)
    grid = np.linspace(max(b_x - 15.0, 1.0), b_x + 15.0, 601)
    _, gaps = exchange_gap_profile(model, grid)
    k = int(np.nanargmin(gaps))
    center = strain_crossing_center(model)
    if strain_window is None:
        lo = max(0.3 * center, 1e-3)
        hi = 1.8 * center + 3.0 * abs(model.n_parallel) / (2.0 * model.gamma_e)
        strain_window = (lo, hi)
    records = strain_crossing_records(model, strain_window[0], strain_window[1])
    return CrossingReport(b_x, float(grid[k]), float(gaps[k]),
                          center, tuple(records))
