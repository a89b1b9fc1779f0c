"""Energy kernel backend selection.

Two interchangeable implementations exist: a Cython extension (_core)
built at install time, and a pure numpy reference (_core_np). The env
var DEFECTOSCOPE_BACKEND picks one at import:

  auto      compiled if available, numpy otherwise (default)
  compiled  require the extension, ImportError if missing
  numpy     force the reference backend

Both compute identical per-edge distances and per-cell t values bitwise;
pow-derived quantities (energies, gradients) agree to a few ulp and
energy totals to ~1e-12 relative (different summation order). Results
are deterministic within a backend.
"""

import os

_requested = os.environ.get("DEFECTOSCOPE_BACKEND", "auto").strip().lower()

if _requested not in ("auto", "compiled", "numpy"):
    raise ImportError(
        "DEFECTOSCOPE_BACKEND must be auto, compiled or numpy, got %r"
        % _requested)

if _requested == "numpy":
    from . import _core_np as _impl
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "DEFECTOSCOPE_BACKEND=compiled but the extension is not "
                "built; reinstall the package or use the numpy backend")
        from . import _core_np as _impl

from ._core_np import active_cells


def backend_name():
    """Name of the kernel backend in use: 'compiled' or 'numpy'."""
    return _impl.BACKEND


def cell_energies(values, inside, group, h, p, b):
    """Per-cell (energy, gradient magnitude t, active mask)."""
    return _impl.cell_energies(values, inside, group, h, p, b)


def total_energy(values, inside, group, h, p, b):
    """Sum of active-cell energies."""
    return _impl.total_energy(values, inside, group, h, p, b)


def energy_gradient(values, inside, group, h, p, b, delta):
    """Ambient per-node gradient of the total energy, plus the energy."""
    return _impl.energy_gradient(values, inside, group, h, p, b, delta)
