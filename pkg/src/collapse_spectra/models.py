"""Model descriptions of collapsing bundle families and JSON loading."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

__all__ = [
    "FAMILIES",
    "ModelError",
    "Warping",
    "BundleModel",
    "load_model",
    "model_from_dict",
    "zoo_names",
    "zoo_model",
]

FAMILIES = ("warped_torus", "mapping_torus", "circle_bundle_T2", "heisenberg", "forms_torus")
TWO_PI = 2.0 * math.pi


class ModelError(ValueError):
    """Invalid model description.  ``fields`` lists the offending keys."""

    def __init__(self, message: str, fields: Sequence[str] = ()):
        super().__init__(message)
        self.fields = list(fields)


@dataclass(frozen=True)
class Warping:
    """Positive 2π-periodic function of the base coordinate.

    ``kind`` is ``const`` (``value``), ``exp_cos`` (``A``, ``phi``:
    ``exp(A cos(s + phi))``) or ``samples`` (uniform periodic samples,
    evaluated by trigonometric interpolation).
    """

    kind: str = "const"
    params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("const", "exp_cos", "samples"):
            raise ModelError(f"unknown warping kind {self.kind!r}", ["warping.kind"])
        if self.kind == "const":
            v = float(self.params.get("value", 1.0))
            if not v > 0:
                raise ModelError("constant warping must be positive", ["warping.params.value"])
        elif self.kind == "exp_cos":
            for key in ("A", "phi"):
                if key in self.params and not np.isfinite(float(self.params[key])):
                    raise ModelError("non-finite exp_cos parameter", [f"warping.params.{key}"])
        else:
            vals = np.asarray(self.params.get("values", []), dtype=float)
            if vals.ndim != 1 or vals.size < 8:
                raise ModelError("samples warping needs at least 8 values", ["warping.params.values"])
            if not np.all(vals > 0):
                raise ModelError("sampled warping must be positive", ["warping.params.values"])

    # --- pointwise evaluation -------------------------------------------------
    @property
    def _A(self) -> float:
        return float(self.params.get("A", 0.0))

    @property
    def _phi(self) -> float:
        return float(self.params.get("phi", 0.0))

    def _sample_coeffs(self) -> np.ndarray:
        vals = np.asarray(self.params["values"], dtype=float)
        return np.fft.fft(vals) / vals.size

    def _trig_eval(self, s, order: int = 0):
        co = self._sample_coeffs()
        n = co.size
        freqs = np.fft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            # split the Nyquist term symmetrically so the interpolant is real
            co = co.copy()
            co[n // 2] *= 0.5
            co = np.append(co, co[n // 2])
            freqs = np.append(freqs, -freqs[n // 2])
        s = np.asarray(s, dtype=float)
        ph = np.exp(1j * np.multiply.outer(s, freqs))
        return np.real(ph @ (co * (1j * freqs) ** order))

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "const":
            return np.full_like(s, float(self.params.get("value", 1.0)), dtype=float)
        if self.kind == "exp_cos":
            return np.exp(self._A * np.cos(s + self._phi))
        return self._trig_eval(s)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "const":
            return np.zeros_like(s, dtype=float)
        if self.kind == "exp_cos":
            return -self._A * np.sin(s + self._phi) * self.value(s)
        return central_difference(self.value, s)

    def log_derivative(self, s):
        return self.derivative(s) / self.value(s)

    def minimum(self, samples: int = 512) -> float:
        return float(np.min(self.value(np.linspace(0.0, TWO_PI, samples, endpoint=False))))

    # --- Fourier data ---------------------------------------------------------
    def fourier(self, nmax: int, power: int = 1) -> Optional[np.ndarray]:
        """Analytic coefficients of ``c**power`` for ``|n| <= nmax`` when known.

        Returns ``None`` if no closed form is available; callers then sample.
        Coefficients follow ``f(s) = sum_n f_n exp(i n s)``.
        """
        n = np.arange(-nmax, nmax + 1)
        if self.kind == "const":
            out = np.zeros(n.size, dtype=complex)
            out[nmax] = float(self.params.get("value", 1.0)) ** power
            return out
        if self.kind == "exp_cos" and power in (1, -1):
            A = power * self._A
            # exp(A cos x) = sum_n I_n(A) exp(i n x)
            return special.iv(n, A).astype(complex) * np.exp(1j * n * self._phi)
        return None


def central_difference(f, s, h: float = 1e-5):
    """Sixth-order central difference of a scalar function."""
    s = np.asarray(s, dtype=float)
    w = (
        (3, 1.0 / 60.0),
        (2, -3.0 / 20.0),
        (1, 3.0 / 4.0),
    )
    out = 0.0
    for j, c in w:
        out = out + c * (np.asarray(f(s + j * h)) - np.asarray(f(s - j * h)))
    return out / h


@dataclass(frozen=True)
class BundleModel:
    """One collapsing family at a chosen scale ``epsilon``.

    Family-specific fields:

    * ``warped_torus`` / ``forms_torus``: ``warpings`` (one per fiber circle).
    * ``mapping_torus``: ``holonomy`` (integer, det ±1), ``metric_path``
      ``{"kind": "equivariant", "mu": ...}`` or ``{"kind": "geodesic_bump"}``
      and ``base_metric`` ``G0``.
    * ``circle_bundle_T2``: ``curvature_a`` (unit-frame curvature),
      ``fiber_length`` at ``epsilon = 1`` and ``collapse`` mode
      (``quotient`` keeps the curvature fixed, ``shrink`` keeps the bundle).
    * ``heisenberg``: ``scale_exponents`` ``(a, b, c)``.
    """

    family: str
    epsilon: float = 1.0
    k: int = 1
    warpings: Tuple[Warping, ...] = ()
    holonomy: Optional[Tuple[Tuple[int, ...], ...]] = None
    metric_path: Dict[str, object] = field(default_factory=dict)
    base_metric: Optional[Tuple[Tuple[float, ...], ...]] = None
    curvature_a: float = 0.0
    fiber_length: float = TWO_PI
    collapse: str = "quotient"
    scale_exponents: Tuple[float, float, float] = (1.0, 1.0, 2.0)
    spin_flags: Dict[str, str] = field(default_factory=dict)
    grid_n: int = 128
    name: str = ""
    base_length: float = TWO_PI

    def __post_init__(self):
        bad: List[str] = []
        if self.family not in FAMILIES:
            raise ModelError(f"unknown family {self.family!r}", ["family"])
        if not (isinstance(self.epsilon, (int, float)) and 0.0 < float(self.epsilon) <= 1.0):
            bad.append("epsilon")
        if abs(self.base_length - TWO_PI) > 1e-12:
            bad.append("base_length")
        if int(self.grid_n) < 8:
            bad.append("grid_n")
        for key, val in self.spin_flags.items():
            if val not in ("periodic", "antiperiodic"):
                bad.append(f"spin_flags.{key}")
        fam = self.family
        if fam in ("warped_torus", "forms_torus"):
            want = 1 if fam == "forms_torus" else self.k
            if self.k < 1 or self.k > 2 or (fam == "forms_torus" and self.k != 1):
                bad.append("k")
            elif len(self.warpings) != want:
                bad.append("warping")
            for w in self.warpings:
                if w.minimum() <= 0:
                    bad.append("warping")
        elif fam == "mapping_torus":
            if self.k != 2:
                bad.append("k")
            H = np.asarray(self.holonomy if self.holonomy is not None else [], dtype=float)
            if H.shape != (2, 2) or np.any(H != np.round(H)) or abs(abs(np.linalg.det(H)) - 1) > 1e-12:
                bad.append("holonomy")
            kind = self.metric_path.get("kind", "equivariant")
            if kind not in ("equivariant", "geodesic_bump"):
                bad.append("metric_path.kind")
            if self.base_metric is not None:
                G0 = np.asarray(self.base_metric, dtype=float)
                if G0.shape != (2, 2) or np.abs(G0 - G0.T).max() > 1e-14 or np.linalg.eigvalsh(G0).min() <= 0:
                    bad.append("base_metric")
        elif fam == "circle_bundle_T2":
            if self.k != 1:
                bad.append("k")
            if not self.fiber_length > 0:
                bad.append("fiber_length")
            if self.collapse not in ("quotient", "shrink"):
                bad.append("collapse")
            if not np.isfinite(self.curvature_a):
                bad.append("curvature_a")
        elif fam == "heisenberg":
            if self.k != 3:
                bad.append("k")
            if len(self.scale_exponents) != 3:
                bad.append("scale_exponents")
        if bad:
            raise ModelError("invalid model fields: " + ", ".join(sorted(set(bad))), sorted(set(bad)))

    # --- derived data ---------------------------------------------------------
    @property
    def base_dim(self) -> int:
        return {"warped_torus": 1, "forms_torus": 1, "mapping_torus": 1, "circle_bundle_T2": 2, "heisenberg": 0}[
            self.family
        ]

    def with_epsilon(self, epsilon: float) -> "BundleModel":
        return replace(self, epsilon=float(epsilon))

    def spin(self, direction: str) -> str:
        return self.spin_flags.get(direction, "periodic")

    def spin_offset(self, direction: str) -> float:
        return 0.5 if self.spin(direction) == "antiperiodic" else 0.0

    @property
    def H(self) -> np.ndarray:
        return np.asarray(self.holonomy, dtype=float)

    def curvature_at(self, epsilon: Optional[float] = None) -> float:
        """Curvature of the horizontal distribution in the unit vertical frame."""
        eps = self.epsilon if epsilon is None else float(epsilon)
        if self.collapse == "shrink":
            return self.curvature_a * eps
        return self.curvature_a

    def fiber_scale(self, epsilon: Optional[float] = None) -> float:
        """Constant ``W`` of the circle fiber (coordinate period 2π)."""
        eps = self.epsilon if epsilon is None else float(epsilon)
        return eps * self.fiber_length / TWO_PI

    def chern_number(self, epsilon: Optional[float] = None) -> float:
        eps = self.epsilon if epsilon is None else float(epsilon)
        return TWO_PI * self.curvature_at(eps) / self.fiber_scale(eps)

    def to_dict(self) -> dict:
        d = {"family": self.family, "epsilon": self.epsilon, "k": self.k, "grid_n": self.grid_n}
        if self.name:
            d["name"] = self.name
        if self.warpings:
            ws = [{"kind": w.kind, "params": dict(w.params)} for w in self.warpings]
            d["warping"] = ws[0] if len(ws) == 1 else ws
        if self.holonomy is not None:
            d["holonomy"] = [list(r) for r in self.holonomy]
        if self.metric_path:
            d["metric_path"] = dict(self.metric_path)
        if self.base_metric is not None:
            d["base_metric"] = [list(r) for r in self.base_metric]
        if self.family == "circle_bundle_T2":
            d.update(curvature_a=self.curvature_a, fiber_length=self.fiber_length, collapse=self.collapse)
        if self.family == "heisenberg":
            d["scale_exponents"] = list(self.scale_exponents)
        if self.spin_flags:
            d["spin_flags"] = dict(self.spin_flags)
        return d


_KNOWN_KEYS = {
    "family", "epsilon", "k", "warping", "holonomy", "metric_path", "base_metric", "curvature_a",
    "fiber_length", "collapse", "scale_exponents", "spin_flags", "grid_n", "name", "description",
}


def _warping_from(obj, path: str) -> Warping:
    if not isinstance(obj, dict):
        raise ModelError("warping must be an object", [path])
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise ModelError("warping params must be an object", [path + ".params"])
    return Warping(kind=obj.get("kind", "const"), params=dict(params))


def model_from_dict(data: dict) -> BundleModel:
    """Validate a parsed JSON document and build the model."""
    if not isinstance(data, dict):
        raise ModelError("model document must be a JSON object", ["<root>"])
    unknown = sorted(set(data) - _KNOWN_KEYS)
    if unknown:
        raise ModelError("unknown model fields: " + ", ".join(unknown), unknown)
    if "family" not in data:
        raise ModelError("missing field family", ["family"])
    family = data["family"]
    kw: dict = {"family": family}
    try:
        if "epsilon" in data:
            kw["epsilon"] = float(data["epsilon"])
        if "k" in data:
            kw["k"] = int(data["k"])
        elif family == "mapping_torus":
            kw["k"] = 2
        elif family == "heisenberg":
            kw["k"] = 3
        if "warping" in data:
            w = data["warping"]
            ws = w if isinstance(w, list) else [w]
            kw["warpings"] = tuple(_warping_from(x, "warping") for x in ws)
            if family in ("warped_torus", "forms_torus") and "k" not in data:
                kw["k"] = len(ws)
        elif family in ("warped_torus", "forms_torus"):
            kw["warpings"] = tuple(Warping() for _ in range(kw.get("k", 1)))
        if "holonomy" in data:
            kw["holonomy"] = tuple(tuple(int(round(float(v))) for v in row) for row in data["holonomy"])
            if np.any(np.asarray(data["holonomy"], dtype=float) != np.asarray(kw["holonomy"], dtype=float)):
                raise ModelError("holonomy entries must be integers", ["holonomy"])
        if "metric_path" in data:
            kw["metric_path"] = dict(data["metric_path"])
        if "base_metric" in data:
            kw["base_metric"] = tuple(tuple(float(v) for v in row) for row in data["base_metric"])
        for key in ("curvature_a", "fiber_length"):
            if key in data:
                kw[key] = float(data[key])
        if "collapse" in data:
            kw["collapse"] = str(data["collapse"])
        if "scale_exponents" in data:
            kw["scale_exponents"] = tuple(float(v) for v in data["scale_exponents"])
        if "spin_flags" in data:
            kw["spin_flags"] = {str(a): str(b) for a, b in dict(data["spin_flags"]).items()}
        if "grid_n" in data:
            kw["grid_n"] = int(data["grid_n"])
        if "name" in data:
            kw["name"] = str(data["name"])
    except ModelError:
        raise
    except (TypeError, ValueError) as exc:
        raise ModelError(f"malformed model value: {exc}", ["<value>"]) from exc
    return BundleModel(**kw)


def load_model(path) -> BundleModel:
    p = Path(path)
    if not p.exists():
        raise ModelError(f"model file not found: {p}", ["model_path"])
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}", ["<json>"]) from exc
    return model_from_dict(data)


def zoo_names() -> List[str]:
    root = resources.files("collapse_spectra") / "zoo"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def zoo_model(name: str) -> BundleModel:
    root = resources.files("collapse_spectra") / "zoo"
    f = root / f"{name}.json"
    if not f.is_file():
        raise ModelError(f"no zoo model named {name!r}", ["model"])
    return model_from_dict(json.loads(f.read_text()))
