"""Norms on fields and explicit coefficient-mass witnesses.

The toolkit certifies upper bounds for the infimal l1 coefficient mass of a
function over finite atom representations f = sum c_i Phi_i^* g_i.  The
witness object is a Decomposition: a list of (coefficient, plane map, atom)
terms over a fixed AtomSet, replayable term by term.  NormSpec wraps the
concrete norms dominance statements are tested against, and BoundReport is
the certificate a pipeline emits: a mass, the residuals backing it, and a
certified flag that is true only when every residual is within its declared
tolerance.
"""

import json
import math

import numpy as np

from .bump import AtomSet, build_atoms
from .diffeo import (CutoffRotation, IdentityMap, MapChain, cutoff_rotation,
                     jacobian_check, map_from_json)
from .field import ScalarField, cknorm, supnorm

__all__ = [
    "NormSpec",
    "Decomposition",
    "Fan",
    "BoundReport",
    "PathSpec",
    "time_cutoff",
    "lf_mass",
]


class NormSpec:
    """A norm on sampled fields: a name plus an evaluator.

    Evaluators take a ScalarField and return a float.  The class carries the
    standard constructions (sup, Lp, Ck, weighted Ck) and accepts any user
    callable; check_axioms probes homogeneity and the triangle inequality
    numerically since a plugin evaluator cannot be trusted by type alone.
    """

    def __init__(self, name, evaluate, params=None):
        self.name = str(name)
        self._eval = evaluate
        self.params = dict(params or {})

    def __call__(self, f):
        return float(self._eval(f))

    def __repr__(self):
        return f"NormSpec({self.name!r})"

    @classmethod
    def sup(cls):
        return cls("sup", supnorm)

    @classmethod
    def lp(cls, p):
        p = float(p)
        if p < 1:
            raise ValueError("Lp norms need p >= 1")

        def ev(f):
            vals = np.abs(f.values) ** p
            return float(np.sum(vals) * f.spec.cell_volume()) ** (1.0 / p)

        return cls(f"L{p:g}", ev, {"p": p})

    @classmethod
    def ck(cls, k):
        k = int(k)
        return cls(f"C{k}", lambda f: cknorm(f, k), {"k": k})

    @classmethod
    def weighted_ck(cls, weights):
        """sum_j w_j * max_{|alpha| = j} sup |d^alpha f| from a weight table."""
        weights = {int(j): float(w) for j, w in weights.items()}

        def ev(f):
            total = 0.0
            for j, w in weights.items():
                best = 0.0
                for alpha in _orders(f.spec.dim, j):
                    best = max(best, float(np.max(np.abs(f.derivative(alpha).values))))
                total += w * best
            return total

        return cls("weightedC", ev, {"weights": weights})

    def check_axioms(self, fields, tol=1e-10, seed=0):
        """Max violation of homogeneity and the triangle inequality.

        fields: list of ScalarFields on a common grid.  Returns the worst
        relative defect over random pairs and scalars; a genuine norm
        evaluated through grids should sit at rounding level.
        """
        rng = np.random.default_rng(seed)
        worst = 0.0
        vals = [self(f) for f in fields]
        scale = max(vals) or 1.0
        for _ in range(len(fields) * 2):
            i, j = rng.integers(0, len(fields), size=2)
            lam = float(rng.uniform(-3.0, 3.0))
            fi, fj = fields[i], fields[j]
            spec = fi.spec
            lam_f = ScalarField(spec, lam * fi.values)
            worst = max(worst, abs(self(lam_f) - abs(lam) * vals[i]) / scale)
            sum_f = ScalarField(spec, fi.values + fj.values)
            worst = max(worst, max(0.0, self(sum_f) - vals[i] - vals[j]) / scale)
        if worst > tol:
            raise ValueError(f"norm axioms violated at level {worst:.3e}")
        return worst


def _orders(dim, total):
    if dim == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _orders(dim - 1, total - head):
            yield (head,) + tail


# ---------------------------------------------------------------------------
# witnesses


class Fan:
    """A contiguous run of terms sharing one map prefix and a rotation family.

    Rotational averages produce N terms whose maps differ only in the final
    cutoff-rotation angle; storing the prefix once keeps witness files small
    and replay cheap.  start/count index into the owning Decomposition.
    """

    def __init__(self, start, count, prefix, rigid, outer, box, center, angles):
        self.start = int(start)
        self.count = int(count)
        self.prefix = prefix
        self.rigid = float(rigid)
        self.outer = float(outer)
        self.box = float(box)
        self.center = (float(center[0]), float(center[1]))
        self.angles = [float(t) for t in angles]

    def shifted(self, offset):
        return Fan(self.start + offset, self.count, self.prefix, self.rigid,
                   self.outer, self.box, self.center, self.angles)


class Decomposition:
    """Finite representation sum_i c_i (Phi_i)^* atom_i over an AtomSet.

    terms: list of (coefficient, plane map, atom id) with atom ids among
    "f0", "f1", "f2".  mass is the l1 sum of the stored coefficients; it is
    an upper bound for the infimal-mass norm of whatever the terms
    reconstruct.  meta carries the residual diagnostics reported by the
    operation that built the witness.
    """

    def __init__(self, terms, atoms, fans=None, meta=None):
        self.terms = [(float(c), m, str(aid)) for c, m, aid in terms]
        self.atoms = atoms
        self.fans = list(fans or [])
        self.meta = dict(meta or {})
        self._atom_fields = None

    def __len__(self):
        return len(self.terms)

    @property
    def mass(self):
        return math.fsum(abs(c) for c, _, _ in self.terms)

    def _atoms(self):
        if self._atom_fields is None:
            self._atom_fields = {
                "f0": self.atoms.f0,
                "f1": self.atoms.f1.field2d(),
                "f2": self.atoms.f2.field2d(),
            }
        return self._atom_fields

    def atom_field(self, atom_id):
        try:
            return self._atoms()[atom_id]
        except KeyError:
            raise KeyError(f"unknown atom id {atom_id!r}") from None

    def evaluate(self, x, y):
        """Reconstruction sum c_i atom_i(Phi_i(x, y)), term by term."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape))
        for c, m, aid in self.terms:
            X, Y = m.apply(x, y)
            out = out + c * self._atoms()[aid](X, Y)
        return out

    def reconstruction_error(self, target, spec):
        xx, yy = spec.meshgrid()
        want = target.eval_at(xx, yy) if isinstance(target, ScalarField) else target(xx, yy)
        return float(np.max(np.abs(self.evaluate(xx, yy) - want)))

    def scaled(self, lam):
        lam = float(lam)
        d = Decomposition([(lam * c, m, aid) for c, m, aid in self.terms],
                          self.atoms, fans=self.fans, meta=dict(self.meta))
        return d

    def concat(self, other):
        """Union witness: terms appended, mass adds exactly (triangle bound)."""
        if other.atoms is not self.atoms and other.atoms.to_json() != self.atoms.to_json():
            raise ValueError("witness concatenation needs a common atom set")
        fans = list(self.fans) + [f.shifted(len(self.terms)) for f in other.fans]
        return Decomposition(self.terms + other.terms, self.atoms, fans=fans)

    def __add__(self, other):
        return self.concat(other)

    def check_jacobians(self, samples=200, tol=1e-5, seed=0, h=None):
        """Worst |det - 1| over the distinct maps of the witness.

        Uses each map's sampling box when it has one and the atom square
        otherwise.  Fails loudly rather than returning a flag: a witness with
        a non-area-preserving map certifies nothing.
        """
        L = self.atoms.L
        box = ((-L, L), (-L, L))
        worst = 0.0
        seen = set()
        for _, m, _ in self.terms:
            if id(m) in seen:
                continue
            seen.add(id(m))
            resid = jacobian_check(m, samples=samples, box=box, seed=seed, h=h)
            worst = max(worst, resid)
        if worst > tol:
            raise ValueError(f"witness map fails area preservation: {worst:.3e}")
        return worst

    # -- serialization ------------------------------------------------------

    def describe(self):
        fan_cover = {}
        for k, fan in enumerate(self.fans):
            for i in range(fan.start, fan.start + fan.count):
                fan_cover[i] = k
        fans_json = [
            {
                "start": f.start,
                "coefficients": [self.terms[f.start + j][0] for j in range(f.count)],
                "atom": self.terms[f.start][2],
                "prefix": f.prefix.describe() if f.prefix is not None else None,
                "rigid": f.rigid,
                "outer": f.outer,
                "box": f.box,
                "center": list(f.center),
                "angles": f.angles,
            }
            for f in self.fans
        ]
        loose = [
            {"coefficient": c, "map": m.describe(), "atom": aid, "index": i}
            for i, (c, m, aid) in enumerate(self.terms)
            if i not in fan_cover
        ]
        return {
            "kind": "decomposition",
            "n_terms": len(self.terms),
            "mass": self.mass,
            "atoms": self.atoms.to_json(),
            "fans": fans_json,
            "terms": loose,
            "meta": _json_safe(self.meta),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.describe(), fh)

    @classmethod
    def from_json(cls, d, atoms=None):
        if atoms is None:
            aj = d["atoms"]
            atoms = build_atoms(aj["L"], aj["C2"], A1=aj["A1"])
        terms = [None] * d["n_terms"]
        fans = []
        for fj in d["fans"]:
            prefix = map_from_json(json.dumps(fj["prefix"])) if fj["prefix"] is not None else None
            angles = fj["angles"]
            fans.append(Fan(fj["start"], len(angles), prefix, fj["rigid"],
                            fj["outer"], fj["box"], fj["center"], angles))
            for j, (c, ang) in enumerate(zip(fj["coefficients"], angles)):
                rot = cutoff_rotation(fj["rigid"], ang, fj["box"], fj["outer"],
                                      center=tuple(fj["center"]))
                maps = [prefix, rot] if prefix is not None else [rot]
                terms[fj["start"] + j] = (c, MapChain(maps, area_preserving=True), fj["atom"])
        for tj in d["terms"]:
            terms[tj["index"]] = (tj["coefficient"], map_from_json(json.dumps(tj["map"])), tj["atom"])
        if any(t is None for t in terms):
            raise ValueError("witness JSON leaves terms undefined")
        return cls(terms, atoms, fans=fans, meta=d.get("meta", {}))

    @classmethod
    def load(cls, path, atoms=None):
        with open(path) as fh:
            return cls.from_json(json.load(fh), atoms=atoms)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def lf_mass(d):
    """l1 coefficient mass of a witness: an upper bound for the infimal-mass
    norm of its reconstruction.  Empty decompositions have mass 0."""
    return d.mass if isinstance(d, Decomposition) else math.fsum(abs(c) for c, _, _ in d)


# ---------------------------------------------------------------------------
# reports


class BoundReport:
    """Certificate for one upper-bound run.

    residuals maps a residual name to {"value", "tol"}; certified is derived,
    never set by hand, so a report cannot claim certification while any
    backing residual is out of tolerance.
    """

    def __init__(self, target, mode, mass, residuals, stage_constants=None,
                 witness=None, diagnostics=None):
        self.target = str(target)
        self.mode = str(mode)
        self.mass = float(mass)
        self.residuals = {
            str(k): {"value": float(v["value"]), "tol": float(v["tol"])}
            for k, v in residuals.items()
        }
        self.stage_constants = {str(k): float(v) for k, v in (stage_constants or {}).items()}
        self.witness = witness
        self.diagnostics = dict(diagnostics or {})

    @property
    def certified(self):
        return all(e["value"] <= e["tol"] for e in self.residuals.values())

    def describe(self):
        return {
            "target": self.target,
            "mode": self.mode,
            "mass": self.mass,
            "residuals": self.residuals,
            "stage_constants": self.stage_constants,
            "certified": self.certified,
            "diagnostics": _json_safe(self.diagnostics),
        }

    def save(self, path, with_witness=None):
        d = self.describe()
        if with_witness is not None:
            self.witness.save(with_witness)
            d["witness_path"] = str(with_witness)
        with open(path, "w") as fh:
            json.dump(d, fh, indent=1)


# ---------------------------------------------------------------------------
# infinite-length paths in the space of normalized functions


def time_cutoff():
    """Smooth time gate: 0 on [0, 1/4] and [3/4, 1], 1 on [1/3, 2/3]."""
    from .profiles import plateau

    return plateau(0.25, 1.0 / 3.0, 2.0 / 3.0, 0.75)


class PathSpec:
    """Blocks of a loop built from bumps H_k fired on windows (a_k, b_k).

    a, b: increasing interleaved sequences in (0, 1).  H: per-block fields
    (may be omitted when only norm values are supplied).  norms: the values
    |H_k| in the base norm; ck_norms maps a derivative order j to the table
    of C^j norms used by the smoothness conditions.
    """

    def __init__(self, a, b, H=None, norms=None, ck_norms=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.H = list(H) if H is not None else None
        self.norms = None if norms is None else np.asarray(norms, dtype=float)
        self.ck_norms = {int(j): np.asarray(v, dtype=float) for j, v in (ck_norms or {}).items()}
        self.cutoff = time_cutoff()
        if self.a.shape != self.b.shape:
            raise ValueError("a and b must pair up")

    def __len__(self):
        return len(self.a)

    def violations(self):
        """All failed admissibility conditions, each naming its block.

        Checks the interleaving 0 < a_1 < b_1 < a_2 < ... < 1, the lower
        bounds |H_k| >= 1/(b_k - a_k), and for each supplied order j the
        decay |H_k|_{C^j} <= (b_k - a_k)^j.
        """
        out = []
        seq = np.stack([self.a, self.b], axis=1).ravel()
        if len(seq) and not (seq[0] > 0.0 and seq[-1] < 1.0):
            out.append("windows must sit inside (0, 1)")
        bad = np.nonzero(np.diff(seq) <= 0)[0]
        for i in bad:
            out.append(f"window endpoints out of order at position {i} "
                       f"({seq[i]:.6g} !< {seq[i + 1]:.6g})")
        gap = self.b - self.a
        if self.norms is not None:
            low = self.norms * gap < 1.0 - 1e-12
            for k in np.nonzero(low)[0]:
                out.append(f"block {k}: |H_k| = {self.norms[k]:.6g} below 1/(b_k-a_k) = {1.0 / gap[k]:.6g}")
        for j, table in self.ck_norms.items():
            high = table > gap ** j + 1e-12
            for k in np.nonzero(high)[0]:
                out.append(f"block {k}: C^{j} norm {table[k]:.6g} exceeds (b_k-a_k)^{j} = {gap[k] ** j:.6g}")
        return out
