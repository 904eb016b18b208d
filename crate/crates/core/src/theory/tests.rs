use super::*;
use crate::linalg::{sym_eigen, DEFAULT_RANK_TOL};
use crate::rng::{gaussian_matrix, gaussian_vector, low_rank_gaussian, stream_rng, streams};
use crate::sampling::{make_partition_space, FiniteSpace, SingleRowSpace};
use crate::solver::{run, Algorithm, Problem, ScrimConfig, TraceOptions};

const TOL: f64 = DEFAULT_RANK_TOL;

fn max_dev(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    a.sub(b).unwrap().max_abs()
}

/// Spectral norm through the eigenvalues of `M M^T`, independent of the SVD.
fn spectral_norm_by_eig(m: &DenseMatrix<f64>) -> f64 {
    let g = m.matmul(&m.transpose()).unwrap();
    let (vals, _) = sym_eigen(&g).unwrap();
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

#[test]
fn single_row_space_gives_scaled_identity() {
    let mut rng = stream_rng(1, 0);
    let m = gaussian_matrix::<f64>(7, 4, &mut rng);
    let space = SingleRowSpace::from_rows(&m).unwrap();
    let hm = compute_h_matrices(&space, &m).unwrap();
    let expect = DenseMatrix::identity(7).scaled(1.0 / m.frobenius_norm_sq());
    assert!(max_dev(&hm.h, &expect) <= 1e-14 * expect.max_abs());
    // H-bar is diag(p_i).
    for (i, &p) in space.probs().iter().enumerate() {
        assert!((hm.h_bar[(i, i)] - p).abs() < 1e-15);
    }
}

#[test]
fn identity_space_gives_spectral_scaling() {
    let mut rng = stream_rng(2, 0);
    let m = gaussian_matrix::<f64>(6, 3, &mut rng);
    let space = FiniteSpace::<f64>::identity(6).unwrap();
    let hm = compute_h_matrices(&space, &m).unwrap();
    let s = spectral_norm_by_eig(&m);
    let expect = DenseMatrix::identity(6).scaled(1.0 / (s * s));
    assert!(max_dev(&hm.h, &expect) <= 1e-12 * expect.max_abs());
    assert!(max_dev(&hm.h_bar, &DenseMatrix::identity(6)) <= 1e-14);
}

#[test]
fn partition_h_matches_brute_force() {
    let mut rng = stream_rng(3, 0);
    let m = gaussian_matrix::<f64>(8, 3, &mut rng);
    let space = make_partition_space(&m, 4, 5).unwrap();
    let hm = compute_h_matrices(&space, &m).unwrap();
    let mut oracle = DenseMatrix::zeros(8, 8);
    for (b, &p) in space.blocks().iter().zip(space.probs()) {
        let s = DenseMatrix::from_fn(8, b.len(), |i, j| if b[j] == i { 1.0 } else { 0.0 });
        let st_m = s.tr_matmul(&m).unwrap();
        let w = p / spectral_norm_by_eig(&st_m).powi(2);
        oracle = oracle.add(&s.matmul(&s.transpose()).unwrap().scaled(w)).unwrap();
    }
    assert!(max_dev(&hm.h, &oracle) <= 1e-12 * oracle.max_abs());
    let sym = hm.h.sub(&hm.h.transpose()).unwrap().frobenius_norm();
    assert!(sym <= 1e-14 * hm.h.frobenius_norm());
    assert!(sym_lambda_min(&hm.h).unwrap() > 0.0);
}

#[test]
fn dense_atoms_match_brute_force_and_reordering() {
    let mut rng = stream_rng(4, 0);
    let m = gaussian_matrix::<f64>(5, 3, &mut rng);
    let atoms: Vec<DenseMatrix<f64>> = (0..4).map(|_| gaussian_matrix(5, 2, &mut rng)).collect();
    let probs = vec![0.1, 0.2, 0.3, 0.4];
    let fwd = FiniteSpace::new(atoms.clone(), probs.clone()).unwrap();
    let rev = FiniteSpace::new(atoms.iter().rev().cloned().collect(), probs.iter().rev().copied().collect()).unwrap();
    let hf = compute_h_matrices(&fwd, &m).unwrap();
    let hr = compute_h_matrices(&rev, &m).unwrap();
    let mut oracle = DenseMatrix::zeros(5, 5);
    for (s, &p) in atoms.iter().zip(&probs) {
        let w = p / spectral_norm_by_eig(&s.tr_matmul(&m).unwrap()).powi(2);
        oracle = oracle.add(&s.matmul(&s.transpose()).unwrap().scaled(w)).unwrap();
    }
    assert!(max_dev(&hf.h, &oracle) <= 1e-12 * oracle.max_abs());
    let (_, rf) = compute_rho(&hf.h, &m, 1.0, TOL).unwrap();
    let (_, rr) = compute_rho(&hr.h, &m, 1.0, TOL).unwrap();
    assert!((rf - rr).abs() <= 1e-12);
}

#[test]
fn rho_closed_forms() {
    let m = DenseMatrix::<f64>::identity(2);
    let space = make_single_row_space_for(&m);
    let h = compute_h_matrices(&space, &m).unwrap().h;
    let (s, rho) = compute_rho(&h, &m, 1.0, TOL).unwrap();
    assert!((s * s - 0.5).abs() < 1e-15);
    assert!((rho - 0.5).abs() < 1e-15);
    let (_, lo) = compute_rho(&h, &m, 1e-9, TOL).unwrap();
    let (_, hi) = compute_rho(&h, &m, 2.0 - 1e-9, TOL).unwrap();
    assert!(lo > 1.0 - 1e-8 && hi > 1.0 - 1e-8);
    assert!(compute_rho(&h, &m, 2.0, TOL).is_err());
    assert!(matches!(
        compute_rho(&h, &DenseMatrix::zeros(2, 2), 1.0, TOL),
        Err(Error::Undefined(_))
    ));
}

fn make_single_row_space_for(m: &DenseMatrix<f64>) -> SingleRowSpace {
    SingleRowSpace::from_rows(m).unwrap()
}

#[test]
fn single_row_rate_matches_remark_formula() {
    let mut rng = stream_rng(5, 0);
    let a = low_rank_gaussian::<f64>(12, 6, 4, &mut rng);
    let space = make_single_row_space_for(&a);
    let report = rate_report(&space, &a, 1.0, TOL).unwrap();
    let f = svd_truncated(&a, TOL).unwrap();
    let expect = 1.0 - f.sigma_min().unwrap().powi(2) / a.frobenius_norm_sq();
    assert!((report.rho.unwrap() - expect).abs() <= 1e-12);
    assert_eq!(report.rank, 4);
    assert!(report.sigma_min_h_half.unwrap().powi(2) >= report.surrogate_lower_bound.unwrap().powi(2) - 1e-10);
}

/// Mean RSE over `trials` seeded SCRIM runs of `max_iters` steps.
fn mean_rse_curve<S: SketchSpace<f64>>(a: &DenseMatrix<f64>, space: &S, trials: u64, max_iters: usize) -> Vec<f64> {
    let mut rng = stream_rng(6, streams::RHS);
    let b = a.matvec(&gaussian_vector(a.cols(), &mut rng)).unwrap();
    let x_star = crate::linalg::pinv_solve_least_norm(a, &b, TOL).unwrap();
    let factor = build_constraint(a, &b, &[], TOL).unwrap();
    let problem = Problem::new(a, &b, &factor).unwrap();
    let algo = Algorithm::Scrim(ScrimConfig { max_iters, rse_tol: 1e-300, ..Default::default() });
    let opts = TraceOptions { record_residual: false, ..Default::default() };
    let mut mean = vec![0.0; max_iters + 1];
    for t in 0..trials {
        let out = run(&problem, space, &algo, t, &opts, Some(&x_star)).unwrap();
        assert_eq!(out.trace.records.len(), max_iters + 1);
        for r in &out.trace.records {
            mean[r.k] += r.rse.unwrap() / trials as f64;
        }
    }
    mean
}

/// Least-squares slope of `log(curve[k])` over `k in [lo, hi]`.
fn log_slope(curve: &[f64], lo: usize, hi: usize) -> f64 {
    let ks: Vec<f64> = (lo..=hi).map(|k| k as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|k| curve[k].ln()).collect();
    let kb = ks.iter().sum::<f64>() / ks.len() as f64;
    let yb = ys.iter().sum::<f64>() / ys.len() as f64;
    ks.iter().zip(&ys).map(|(k, y)| (k - kb) * (y - yb)).sum::<f64>()
        / ks.iter().map(|k| (k - kb).powi(2)).sum::<f64>()
}

#[test]
fn monte_carlo_slope_matches_rho_when_bound_is_attained() {
    // With orthonormal columns every error direction contracts at exactly
    // rho in expectation under single-row sampling.
    let q = crate::linalg::qr_thin(&gaussian_matrix::<f64>(40, 6, &mut stream_rng(6, streams::MATRIX)))
        .unwrap()
        .0;
    let space = SingleRowSpace::from_rows(&q).unwrap();
    let rho = rate_report(&space, &q, 1.0, TOL).unwrap().rho.unwrap();
    assert!((rho - 5.0 / 6.0).abs() < 1e-12);
    let mean = mean_rse_curve(&q, &space, 500, 200);
    let slope = log_slope(&mean, 20, 200);
    let rel = (slope - rho.ln()).abs() / rho.ln().abs();
    assert!(rel <= 0.15, "fitted slope {slope}, log rho {}, relative gap {rel}", rho.ln());
}

#[test]
fn monte_carlo_partition_runs_respect_rho() {
    let a = gaussian_matrix::<f64>(10, 6, &mut stream_rng(6, streams::MATRIX));
    let space = make_partition_space(&a, 2, 3).unwrap();
    let rho = rate_report(&space, &a, 1.0, TOL).unwrap().rho.unwrap();
    assert!(rho > 0.0 && rho < 1.0);
    let mean = mean_rse_curve(&a, &space, 500, 200);
    for (k, m) in mean.iter().enumerate() {
        assert!(*m <= 1.1 * rho.powi(k as i32) * mean[0], "k = {k}");
    }
    // The bound is a worst case over error directions; averaged runs
    // contract at least as fast.
    assert!(log_slope(&mean, 20, 200) <= rho.ln());
}

#[test]
fn unconstrained_comparison_is_exact() {
    let mut rng = stream_rng(7, 0);
    let a = gaussian_matrix::<f64>(12, 5, &mut rng);
    let blocks: Vec<Vec<usize>> = (0..4).map(|i| (3 * i..3 * i + 3).collect()).collect();
    let c = compare_rates(&a, &[], &blocks, 1.0, TOL).unwrap();
    assert_eq!(c.rho.unwrap(), c.rho_tilde);
    assert_eq!(c.pass, Some(true));
}

#[test]
fn constrained_block_never_slows_the_rate() {
    let mut rng = stream_rng(8, 0);
    for _ in 0..10 {
        let a = gaussian_matrix::<f64>(12, 5, &mut rng);
        let blocks: Vec<Vec<usize>> = (0..4).map(|i| (3 * i..3 * i + 3).collect()).collect();
        let c = compare_rates(&a, &blocks[1], &blocks, 1.0, TOL).unwrap();
        assert_eq!(c.pass, Some(true), "{c:?}");
    }
}

#[test]
fn ill_conditioned_block_in_constraint_strictly_helps() {
    let mut rng = stream_rng(9, 0);
    let mut a = gaussian_matrix::<f64>(12, 5, &mut rng);
    // Rows 0..3 nearly repeat each other.
    for i in 1..3 {
        for j in 0..5 {
            a[(i, j)] = a[(0, j)] * (1.0 + 1e-3 * i as f64) + 1e-4 * a[(i, j)];
        }
    }
    let blocks: Vec<Vec<usize>> = (0..4).map(|i| (3 * i..3 * i + 3).collect()).collect();
    let c = compare_rates(&a, &blocks[0], &blocks, 1.0, TOL).unwrap();
    assert_eq!(c.pass, Some(true));
    assert!(c.rho.unwrap() < c.rho_tilde);
}

#[test]
fn comparison_validates_blocks() {
    let a = DenseMatrix::<f64>::identity(4);
    assert!(compare_rates(&a, &[], &[vec![0, 1], vec![2]], 1.0, TOL).is_err());
    assert!(compare_rates(&a, &[], &[vec![0, 1], vec![1, 2, 3]], 1.0, TOL).is_err());
    assert!(compare_rates(&a, &[0], &[vec![0, 1], vec![2, 3]], 1.0, TOL).is_err());
}

#[test]
fn comparison_skips_when_induced_space_is_degenerate() {
    let a = DenseMatrix::<f64>::identity(4);
    let c = compare_rates(&a, &[0, 1, 2, 3], &[vec![0, 1], vec![2, 3]], 1.0, TOL).unwrap();
    assert_eq!(c.pass, None);
    assert!(c.skipped.is_some());
}

#[test]
fn interlacing_cases() {
    let mut rng = stream_rng(10, 0);
    let a = low_rank_gaussian::<f64>(15, 8, 6, &mut rng);
    let r = verify_interlacing(&a, &[], TOL).unwrap();
    assert!(r.pass);
    for (x, y) in r.sigma_a.iter().zip(&r.sigma_ir_p) {
        assert!((x - y).abs() <= 1e-12 * r.sigma_a[0]);
    }
    let all: Vec<usize> = (0..15).collect();
    let r = verify_interlacing(&a, &all, TOL).unwrap();
    assert_eq!(r.rank_ir_p, 0);
    assert!(r.pass);
    for ip in [vec![0], vec![1, 5, 9], vec![0, 2, 4, 6, 8, 10, 12]] {
        let r = verify_interlacing(&a, &ip, TOL).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.rank_a, 6);
    }
}

#[test]
fn surrogate_bound_cases() {
    let mut rng = stream_rng(11, 0);
    let m = gaussian_matrix::<f64>(9, 4, &mut rng);
    let single = make_single_row_space_for(&m);
    let ident = FiniteSpace::<f64>::identity(9).unwrap();
    let part = make_partition_space(&m, 3, 1).unwrap();
    let spaces: [&dyn SketchSpace<f64>; 3] = [&single, &ident, &part];
    for space in spaces {
        let hm = compute_h_matrices(space, &m).unwrap();
        let r = verify_surrogate_bound(&hm.h, &hm.h_bar, &m, TOL).unwrap();
        assert!(r.pass, "{r:?}");
    }
    let hm = compute_h_matrices(&ident, &m).unwrap();
    assert!((sym_lambda_min(&hm.h_bar).unwrap() - 1.0).abs() < 1e-14);

    // Equal singular values: sigma_min / ||.||_F = 1 / sqrt(rank).
    let q = crate::linalg::qr_thin(&gaussian_matrix::<f64>(9, 4, &mut rng)).unwrap().0;
    let hm = compute_h_matrices(&single, &q).unwrap();
    let space = make_single_row_space_for(&q);
    let hm2 = compute_h_matrices(&space, &q).unwrap();
    let r = verify_surrogate_bound(&hm2.h, &hm2.h_bar, &q, TOL).unwrap();
    assert!(r.pass && r.lhs > r.rhs);
    assert!((r.lhs - 0.5).abs() < 1e-12);
    let _ = hm;
}

#[test]
fn rate_report_flags_uncovered_space() {
    let m = DenseMatrix::<f64>::identity(3);
    let space = PartitionSpace::from_blocks(3, vec![vec![0, 1], vec![2]], vec![1.0, 0.0]).unwrap();
    let r = rate_report(&space, &m, 1.0, TOL).unwrap();
    assert!(r.rho.is_none());
    assert!(r.undefined_reason.is_some());
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"rho\":null"));
}
