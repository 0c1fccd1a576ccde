"""Functions represented as point atoms plus a uniformly gridded density.

The zero-claim kernels of the surplus process are Dirac masses riding on
deterministic drift lines, so every kernel manipulated downstream is a
"hybrid" object: a finite list of exact ``(location, mass)`` atoms plus
density samples on a uniform grid.  Atoms are never smeared onto the grid;
convolving against an atom is an exact shift and scale.  Atom locations
(and grid origins) may be negative: several intermediate kernels carry
formal mass at negative times that is consumed by later exact shifts.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["HybridFunction", "trapz_convolve"]

#: relative slack when deciding whether two grid origins sit on one lattice
_ALIGN_RTOL = 1e-9


def trapz_convolve(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    """Discrete trapezoid-rule convolution of two sampled densities.

    Both inputs are samples at 0, step, 2*step, ...; the result has length
    ``len(a) + len(b) - 1`` and approximates ``(a * b)(k*step)`` with the
    trapezoid rule on the exact integration range ``[0, k*step]``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        return np.zeros(max(a.size + b.size - 1, 0))
    full = np.convolve(a, b)
    # subtract half the boundary products: integrand endpoints of each cell
    lo = np.concatenate([a[0] * b, a[1:] * b[-1]])
    hi = np.concatenate([b[0] * a, a[-1] * b[1:]])
    return (full - 0.5 * (lo + hi)) * step


def _merge_atoms(atoms) -> tuple[tuple[float, float], ...]:
    merged: dict[float, float] = {}
    for loc, mass in atoms:
        loc = float(loc)
        mass = float(mass)
        merged[loc] = merged.get(loc, 0.0) + mass
    return tuple(sorted((l, m) for l, m in merged.items() if m != 0.0))


@dataclass(frozen=True)
class HybridFunction:
    """Atoms plus a gridded density over one variable (time or amount)."""

    domain: str
    step: float
    origin: float = 0.0
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.domain not in ("time", "amount"):
            raise ValueError(f"unknown domain label {self.domain!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.size and self.step <= 0:
            raise ValueError("gridded values need a positive step")
        object.__setattr__(self, "atoms", _merge_atoms(self.atoms))

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------
    @classmethod
    def atom(cls, loc: float, mass: float, domain: str = "time",
             step: float = 0.0) -> "HybridFunction":
        """A single point mass."""
        return cls(domain=domain, step=step, atoms=((loc, mass),))

    @classmethod
    def zero(cls, domain: str = "time", step: float = 0.0) -> "HybridFunction":
        return cls(domain=domain, step=step)

    @classmethod
    def from_samples(cls, origin: float, step: float, values,
                     domain: str = "time",
                     atoms: tuple[tuple[float, float], ...] = ()) -> "HybridFunction":
        return cls(domain=domain, step=step, origin=float(origin),
                   values=np.asarray(values, dtype=float), atoms=atoms)

    # ------------------------------------------------------------------
    # basic queries
    # ------------------------------------------------------------------
    @property
    def grid(self) -> np.ndarray:
        """Abscissae of the density samples."""
        return self.origin + self.step * np.arange(self.values.size)

    def density_at(self, t) -> np.ndarray:
        """Linear interpolation of the density part (atoms excluded)."""
        t = np.asarray(t, dtype=float)
        if self.values.size == 0:
            return np.zeros(t.shape)
        return np.interp(t, self.grid, self.values, left=0.0, right=0.0)

    def integrate(self, lo: float = -np.inf, hi: float = np.inf) -> float:
        """Atom masses inside [lo, hi] plus the trapezoid of the grid overlap."""
        if lo > hi:
            raise ValueError("integrate needs lo <= hi")
        total = sum(m for l, m in self.atoms if lo <= l <= hi)
        n = self.values.size
        if n >= 2:
            g = self.grid
            a = max(lo, g[0])
            b = min(hi, g[-1])
            if a < b:
                # clip endpoints onto the lattice by interpolation
                pts = g[(g > a) & (g < b)]
                xs = np.concatenate([[a], pts, [b]])
                ys = np.interp(xs, g, self.values)
                total += np.trapz(ys, xs)
        return float(total)

    def total_mass(self) -> float:
        return self.integrate()

    def laplace_at(self, delta: float) -> float:
        """sum(mass * exp(-delta*loc)) + trapz(exp(-delta*t) * density).

        Atoms at negative locations contribute their formal weight
        ``exp(-delta*loc) > 1``; several intermediate kernels rely on this.
        """
        total = sum(m * np.exp(-delta * l) for l, m in self.atoms)
        if self.values.size >= 2:
            g = self.grid
            total += np.trapz(np.exp(-delta * g) * self.values, dx=self.step)
        return float(total)

    # ------------------------------------------------------------------
    # linear algebra
    # ------------------------------------------------------------------
    def scale(self, alpha: float) -> "HybridFunction":
        return HybridFunction(
            domain=self.domain, step=self.step, origin=self.origin,
            values=alpha * self.values,
            atoms=tuple((l, alpha * m) for l, m in self.atoms))

    def shift(self, dt: float) -> "HybridFunction":
        """Exact translation of the whole function by ``dt``."""
        return HybridFunction(
            domain=self.domain, step=self.step, origin=self.origin + dt,
            values=self.values,
            atoms=tuple((l + dt, m) for l, m in self.atoms))

    def add(self, other: "HybridFunction") -> "HybridFunction":
        """Pointwise sum; grids must share a lattice (step and aligned origins)."""
        if self.domain != other.domain:
            raise ValueError("cannot add functions on different domains")
        if self.values.size == 0:
            return HybridFunction(domain=other.domain, step=other.step,
                                  origin=other.origin, values=other.values,
                                  atoms=self.atoms + other.atoms)
        if other.values.size == 0:
            return HybridFunction(domain=self.domain, step=self.step,
                                  origin=self.origin, values=self.values,
                                  atoms=self.atoms + other.atoms)
        if abs(self.step - other.step) > _ALIGN_RTOL * self.step:
            raise ValueError("grid step mismatch in add")
        off = (other.origin - self.origin) / self.step
        k = round(off)
        if abs(off - k) > 1e-6:
            raise ValueError("grid origins are not on a common lattice")
        lo = min(0, k)
        hi = max(self.values.size, k + other.values.size)
        vals = np.zeros(hi - lo)
        vals[-lo:self.values.size - lo] += self.values
        vals[k - lo:k - lo + other.values.size] += other.values
        return HybridFunction(domain=self.domain, step=self.step,
                              origin=self.origin + lo * self.step,
                              values=vals, atoms=self.atoms + other.atoms)

    # ------------------------------------------------------------------
    # convolution
    # ------------------------------------------------------------------
    def convolve(self, other: "HybridFunction") -> "HybridFunction":
        """Convolution extended to atoms by exact translation.

        atom*atom -> atom at summed locations; atom*density -> shifted,
        scaled density; density*density -> trapezoid discrete convolution.
        """
        if self.domain != other.domain:
            raise ValueError("cannot convolve functions on different domains")
        step = self.step if self.values.size else other.step
        if (self.values.size and other.values.size
                and abs(self.step - other.step) > _ALIGN_RTOL * self.step):
            raise ValueError("grid step mismatch in convolve")

        out_atoms = []
        for la, ma in self.atoms:
            for lb, mb in other.atoms:
                out_atoms.append((la + lb, ma * mb))

        pieces = []
        for src, dst in ((self, other), (other, self)):
            if dst.values.size == 0:
                continue
            for loc, mass in src.atoms:
                pieces.append((dst.origin + loc, mass * dst.values))
        if self.values.size and other.values.size:
            conv = trapz_convolve(self.values, other.values, step)
            pieces.append((self.origin + other.origin, conv))

        if not pieces:
            return HybridFunction(domain=self.domain, step=step,
                                  atoms=tuple(out_atoms))
        # accumulate pieces on the lattice of the first one
        base = pieces[0][0]
        lo_idx = 0
        hi_idx = pieces[0][1].size
        offs = []
        for org, vals in pieces:
            off = (org - base) / step
            k = round(off)
            if abs(off - k) > 1e-6:
                # misaligned shift (atom at an off-lattice location):
                # resample that piece onto the base lattice
                k = None
            offs.append(k)
            if k is not None:
                lo_idx = min(lo_idx, k)
                hi_idx = max(hi_idx, k + vals.size)
        out = np.zeros(hi_idx - lo_idx)
        out_origin = base + lo_idx * step
        grid = out_origin + step * np.arange(out.size)
        for (org, vals), k in zip(pieces, offs):
            if k is None:
                src_grid = org + step * np.arange(vals.size)
                out += np.interp(grid, src_grid, vals, left=0.0, right=0.0)
            else:
                out[k - lo_idx:k - lo_idx + vals.size] += vals
        return HybridFunction(domain=self.domain, step=step, origin=out_origin,
                              values=out, atoms=tuple(out_atoms))

    # ------------------------------------------------------------------
    # resampling / serialization
    # ------------------------------------------------------------------
    def resample(self, origin: float, n: int) -> "HybridFunction":
        """Density sampled on a new lattice (atoms carried over unchanged)."""
        grid = origin + self.step * np.arange(n)
        return HybridFunction(domain=self.domain, step=self.step, origin=origin,
                              values=self.density_at(grid), atoms=self.atoms)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# hybridfunction v1\n")
        buf.write(f"# domain,{self.domain}\n")
        buf.write(f"# step,{self.step!r}\n")
        buf.write(f"# origin,{self.origin!r}\n")
        buf.write("section,x,value\n")
        for loc, mass in self.atoms:
            buf.write(f"atom,{loc!r},{mass!r}\n")
        for x, v in zip(self.grid, self.values):
            buf.write(f"grid,{x!r},{v!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "HybridFunction":
        domain = "time"
        step = 0.0
        origin = 0.0
        atoms = []
        vals = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "," in body:
                    key, _, val = body.partition(",")
                    if key == "domain":
                        domain = val
                    elif key == "step":
                        step = float(val)
                    elif key == "origin":
                        origin = float(val)
                continue
            kind, _, rest = line.partition(",")
            if kind == "atom":
                loc, _, mass = rest.partition(",")
                atoms.append((float(loc), float(mass)))
            elif kind == "grid":
                _, _, v = rest.partition(",")
                vals.append(float(v))
        return cls(domain=domain, step=step, origin=origin,
                   values=np.asarray(vals), atoms=tuple(atoms))
