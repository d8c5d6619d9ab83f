"""Born series, on-shell T-matrix, cross sections and a partial-wave oracle."""
from dataclasses import dataclass

import numpy as np

from .born import (BornDivergence, BornResult, QuadratureError, RadialBornSolver,
                   born_series_B, born_spectral_radius, divergence_threshold)
from .onshell import (DEFAULT_ETAS, INTERLEAVED_ETAS, ExtrapolationError, OnShellAmplitude,
                      diff_cross_section, on_shell_amplitude, optical_theorem_residual,
                      t_matrix_on_shell, total_cross_section)
from .operator import apply_born_operator, green_route_gaussian_input, tensor_grid_born_operator
from .partial_waves import (TailError, born_phase_shift, partial_wave_amplitude,
                            partial_wave_total, phase_shift_oracle, physical_total)
from .tables import (CrossSectionTable, TMatrixTable, build_tables, cross_section_from_function,
                     read_cross_sections, read_tmatrix, write_cross_sections, write_tmatrix)


@dataclass(frozen=True)
class OffShellPoint:
    alpha: float
    eta: float
    p: tuple
    r: tuple

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")

    def evaluate(self, spec, **kw):
        return born_series_B(spec, self.alpha, self.eta, np.asarray(self.p), np.asarray(self.r), **kw)
