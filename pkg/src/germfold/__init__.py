"""Deformed arc foliations and contact trivializations of weighted-homogeneous germs."""

from .arcs import (ArcBatch, DeformedArc, NoContraction, NotOnLink, Obstructed, ansatz_h,
                   arc_residual_order, assemble_residual, estimate_t_max, solve_arc, solve_arcs)
from .germfile import GermDefinition, load_corpus, load_corpus_germ, load_germ
from .obstruction import (GermSystem, ObstructionReport, build_germ_system, find_link_points,
                          gram_and_adjugate, is_obstructed, obstruction_coefficient, rescaled_gradient,
                          scan_link, tau)
from .parser import parse_poly, pretty_print
from .poly import WPolynomial
from .series import TSeries, ts_ord
from .trivial import (Trivializer, contact_factor_series, jacobian_fd, lipschitz_scan, psi_inverse,
                      psi_map, right_trivialize)
from .wgeom import WeightSystem, estimate_tord, make_weight_system, polar_fwd, polar_inv, sample_sphere

__version__ = "0.1.0"
