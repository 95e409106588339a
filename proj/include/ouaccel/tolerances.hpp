#pragma once

// Central tolerance table. Every numeric threshold used by the library lives
// here so tests and implementation agree on one set of constants.

namespace ouaccel::tol {

// matrix validation
inline constexpr double symmetry_rel = 1e-10;        // ||M - M^T||_F vs ||M||_F
inline constexpr double eig_residual_rel = 1e-10;    // ||M q - lambda q|| vs ||M||_F
inline constexpr double orthonormality = 1e-12;      // ||Q^T Q - I||_F
inline constexpr double companion_rel = 1e-8;        // trace / det cross-checks
inline constexpr double expm_semigroup_rel = 1e-9;   // e^A e^B vs e^{A+B} for commuting A,B
inline constexpr double psd_rank_rel = 1e-10;        // eigenvalue cut in psd_factor
inline constexpr double psd_negative_rel = 1e-8;     // indefiniteness threshold

// design module
inline constexpr double membership_rel = 1e-9;       // ||A S^-1 + S^-1 A^T + 2D||_F vs ||S||_F
inline constexpr double trace_budget_abs = 1e-10;    // Tr D <= N + this
inline constexpr double equal_diag_rel = 1e-10;      // diagonal residual vs 1 + |Tr M|/N
inline constexpr double basis_orthonormality = 1e-10;
inline constexpr double commutator_rel = 1e-10;      // vs ||Q||_F
inline constexpr double nu_distinct_rel = 1e-8;      // |nu_k - nu_l| >= this * max nu
inline constexpr double rate_rel = 1e-8;             // closed-form rate vs spectrum
inline constexpr double certificate_abs = 1e-8;      // Re lambda of (Dt+Jt)/tau vs 1
inline constexpr double kalman_rank_rel = 1e-10;     // singular value cut

// evolution module
inline constexpr double law_singular_rel = 1e-12;    // eigenvalue of Sigma vs ||Sigma||
inline constexpr double semigroup_rel = 1e-8;        // evolve(evolve(s),t) vs evolve(s+t)
inline constexpr double norm_curve_rel = 1e-8;       // closed form vs direct singular value

// kinetic module
inline constexpr double nu_bracket_rel = 1e-8;       // contract tolerance on nu*
inline constexpr double nu_search_rel = 1e-13;       // internal golden-section tolerance
inline constexpr double kinetic_spectrum_rel = 1e-9; // closed-form roots vs block eigenvalues
inline constexpr double rate_tie_rel = 1e-12;        // overdamped vs kinetic equality band

}  // namespace ouaccel::tol
