use proptest::prelude::*;

use super::*;
use crate::constraint::build_constraint;
use crate::dense::DenseVector;
use crate::linalg::DEFAULT_RANK_TOL;
use crate::rng::{gaussian_matrix, gaussian_vector, low_rank_gaussian, stream_rng};

fn mat(rows: usize, cols: usize, v: &[f64]) -> DenseMatrix<f64> {
    DenseMatrix::from_row_slice(rows, cols, v).unwrap()
}

fn assert_distinct_in_range(idx: &[usize], m: usize) {
    let mut s = idx.to_vec();
    s.sort_unstable();
    s.dedup();
    assert_eq!(s.len(), idx.len(), "duplicate indices in {idx:?}");
    assert!(idx.iter().all(|&i| i < m));
}

/// Residual of projecting the rows of `a` off the span of the selected rows,
/// via modified Gram-Schmidt on those rows.
fn gram_schmidt_residual(a: &DenseMatrix<f64>, rows: &[usize]) -> f64 {
    let mut basis: Vec<DenseVector<f64>> = Vec::new();
    for &i in rows {
        let mut v = a.row(i);
        for q in &basis {
            let c = q.dot(&v);
            v.axpy(-c, q);
        }
        let nv = v.norm();
        if nv > 1e-12 {
            basis.push(v.scaled(1.0 / nv));
        }
    }
    let mut total = 0.0;
    for i in 0..a.rows() {
        let mut v = a.row(i);
        for q in &basis {
            let c = q.dot(&v);
            v.axpy(-c, q);
        }
        total += v.norm_sq();
    }
    total.sqrt()
}

#[test]
fn cpqr_picks_largest_row_first_and_stops_early() {
    let a = mat(3, 2, &[3.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
    let sel = select_cpqr(&a, 1).unwrap();
    assert_eq!(sel.indices, vec![0]);
    // After pivots 0 and 1 the third row is annihilated.
    let sel = select_cpqr(&a, 3).unwrap();
    assert_eq!(sel.indices, vec![0, 1]);
    assert!(sel.truncated);
    assert_eq!(sel.notes.len(), 1);
}

#[test]
fn cpqr_ties_break_to_lowest_index() {
    let a = mat(3, 2, &[0.0, 1.0, 1.0, 0.0, 0.0, -1.0]);
    assert_eq!(select_cpqr(&a, 2).unwrap().indices, vec![0, 1]);
}

#[test]
fn cpqr_never_reselects_pivot() {
    let mut rng = stream_rng(1, 0);
    let a = gaussian_matrix::<f64>(12, 5, &mut rng);
    let sel = select_cpqr(&a, 5).unwrap();
    assert_distinct_in_range(&sel.indices, 12);
    assert_eq!(sel.indices.len(), 5);
}

#[test]
fn cpqr_residual_matches_gram_schmidt() {
    let mut rng = stream_rng(2, 0);
    let a = gaussian_matrix::<f64>(5, 3, &mut rng);
    for m_p in 1..=3 {
        let (sel, resid) = cpqr_with_residual(&a, m_p).unwrap();
        let oracle = gram_schmidt_residual(&a, &sel.indices);
        assert!((resid - oracle).abs() <= 1e-9 * a.frobenius_norm(), "{resid} vs {oracle}");
    }
}

#[test]
fn cpqr_rejects_bad_requests() {
    let a = DenseMatrix::<f64>::identity(3);
    assert!(select_cpqr(&a, 4).is_err());
    assert!(select_cpqr(&DenseMatrix::<f64>::zeros(0, 3), 0).is_err());
}

#[test]
fn svd_selection_prefers_dominant_direction() {
    // Row 0 is 10 e_1; the other rows live in span{e_2, e_3, e_4}.
    let mut rng = stream_rng(3, 0);
    let mut a = DenseMatrix::<f64>::zeros(6, 4);
    a[(0, 0)] = 10.0;
    for i in 1..6 {
        for j in 1..4 {
            a[(i, j)] = crate::rng::standard_normal(&mut rng);
        }
    }
    let sel = select_svd(&a, 1, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(sel.indices, vec![0]);
}

#[test]
fn svd_selection_exact_rank_has_zero_id_error() {
    let mut rng = stream_rng(4, 0);
    let a = low_rank_gaussian::<f64>(15, 8, 4, &mut rng);
    let sel = select_svd(&a, 4, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(sel.indices.len(), 4);
    let err = id_error(&a, &sel.indices, DEFAULT_RANK_TOL).unwrap();
    assert!(err <= 1e-8 * a.frobenius_norm());

    let sq = gaussian_matrix::<f64>(5, 5, &mut rng);
    let sel = select_svd(&sq, 5, DEFAULT_RANK_TOL).unwrap();
    assert!(id_error(&sq, &sel.indices, DEFAULT_RANK_TOL).unwrap() <= 1e-10 * sq.frobenius_norm());
}

#[test]
fn svd_selection_clips_to_rank() {
    let mut rng = stream_rng(5, 0);
    let a = low_rank_gaussian::<f64>(10, 6, 2, &mut rng);
    let sel = select_svd(&a, 5, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(sel.indices.len(), 2);
    assert!(sel.truncated);
    assert!(sel.notes[0].contains("clipped"));
}

#[test]
fn sqnorm_single_nonzero_row() {
    let a = mat(3, 2, &[0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
    for seed in 0..20 {
        assert_eq!(select_sqnorm(&a, 1, seed).unwrap().indices, vec![1]);
    }
    assert!(select_sqnorm(&a, 2, 0).is_err());
}

#[test]
fn sqnorm_equal_rows_are_equally_likely() {
    let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let hits = (0..2000u64)
        .filter(|&s| select_sqnorm(&a, 1, s).unwrap().indices[0] == 0)
        .count();
    let freq = hits as f64 / 2000.0;
    assert!((freq - 0.5).abs() <= 0.05, "frequency {freq}");
}

#[test]
fn sqnorm_full_draw_is_a_permutation() {
    let mut rng = stream_rng(6, 0);
    let a = gaussian_matrix::<f64>(9, 3, &mut rng);
    let mut idx = select_sqnorm(&a, 9, 42).unwrap().indices;
    idx.sort_unstable();
    assert_eq!(idx, (0..9).collect::<Vec<_>>());
}

#[test]
fn skcpqr_identity_sketch_matches_cpqr() {
    let mut rng = stream_rng(7, 0);
    let a = gaussian_matrix::<f64>(10, 4, &mut rng);
    let g = DenseMatrix::identity(4);
    assert_eq!(
        select_skcpqr_with_sketch(&a, 3, &g).unwrap(),
        select_cpqr(&a, 3).unwrap()
    );
}

#[test]
fn skcpqr_recovers_exact_rank() {
    let mut rng = stream_rng(8, 0);
    let a = low_rank_gaussian::<f64>(30, 20, 5, &mut rng);
    let good = (0..20u64)
        .filter(|&seed| {
            let sel = select_skcpqr(&a, 5, 10, seed).unwrap();
            id_error(&a, &sel.indices, DEFAULT_RANK_TOL).unwrap() <= 1e-6 * a.frobenius_norm()
        })
        .count();
    assert!(good >= 18, "{good}/20");
}

#[test]
fn skcpqr_is_seed_deterministic_and_validates_width() {
    let mut rng = stream_rng(9, 0);
    let a = gaussian_matrix::<f64>(12, 8, &mut rng);
    assert_eq!(
        select_skcpqr(&a, 3, 5, 77).unwrap(),
        select_skcpqr(&a, 3, 5, 77).unwrap()
    );
    assert!(select_skcpqr(&a, 4, 3, 0).is_err());
}

#[test]
fn rbrp_single_candidate_is_sequential_sampling_with_deflation() {
    let mut rng = stream_rng(10, 0);
    let a = gaussian_matrix::<f64>(15, 6, &mut rng);
    for seed in 0..10u64 {
        let sel = select_rbrp(&a, 5, 1, seed).unwrap();
        // Oracle: recompute residual norms exactly every step, same stream.
        let mut r = stream_rng(seed, streams::SELECTION);
        let mut picked: Vec<usize> = Vec::new();
        for _ in 0..5 {
            let weights: Vec<f64> = (0..15)
                .map(|i| {
                    if picked.contains(&i) {
                        0.0
                    } else {
                        let v = a.row(i);
                        let resid = gram_schmidt_residual_row(&a, &picked, &v);
                        resid * resid
                    }
                })
                .collect();
            picked.push(weighted_index(&weights, &mut r).unwrap());
        }
        assert_eq!(sel.indices, picked);
    }
}

fn gram_schmidt_residual_row(a: &DenseMatrix<f64>, rows: &[usize], v: &DenseVector<f64>) -> f64 {
    let mut basis: Vec<DenseVector<f64>> = Vec::new();
    for &i in rows {
        let mut w = a.row(i);
        for q in &basis {
            let c = q.dot(&w);
            w.axpy(-c, q);
        }
        let nw = w.norm();
        basis.push(w.scaled(1.0 / nw));
    }
    let mut v = v.clone();
    for q in &basis {
        let c = q.dot(&v);
        v.axpy(-c, q);
    }
    v.norm()
}

#[test]
fn rbrp_orthogonal_rows_all_selected() {
    let a = DenseMatrix::from_diagonal(4, 4, &[4.0, 3.0, 2.0, 1.0]).unwrap();
    let sel = select_rbrp(&a, 4, 4, 5).unwrap();
    assert_distinct_in_range(&sel.indices, 4);
    assert_eq!(sel.indices.len(), 4);
    assert!(id_error(&a, &sel.indices, DEFAULT_RANK_TOL).unwrap() < 1e-14);
}

#[test]
fn rbrp_is_competitive_with_cpqr() {
    let mut rng = stream_rng(11, 0);
    let a = gaussian_matrix::<f64>(40, 20, &mut rng);
    let reference = id_error(&a, &select_cpqr(&a, 10).unwrap().indices, DEFAULT_RANK_TOL).unwrap();
    let good = (0..20u64)
        .filter(|&seed| {
            let sel = select_rbrp(&a, 10, 4, seed).unwrap();
            assert_eq!(sel.indices.len(), 10);
            id_error(&a, &sel.indices, DEFAULT_RANK_TOL).unwrap() <= 2.0 * reference
        })
        .count();
    assert!(good >= 15, "{good}/20");
}

#[test]
fn rbrp_flags_exhausted_residual() {
    let mut rng = stream_rng(12, 0);
    let a = low_rank_gaussian::<f64>(10, 6, 2, &mut rng);
    let sel = select_rbrp(&a, 5, 3, 1).unwrap();
    assert!(sel.truncated);
    assert_eq!(sel.indices.len(), 2);
}

#[test]
fn config_validation_and_dispatch() {
    let a = DenseMatrix::<f64>::identity(4);
    let mut cfg = SelectionConfig::new(SelectionMethod::Skcpqr, 2, 0);
    assert!(select(&a, &cfg, DEFAULT_RANK_TOL).is_err());
    cfg.sketch_cols = Some(3);
    assert_eq!(select(&a, &cfg, DEFAULT_RANK_TOL).unwrap().indices.len(), 2);
    let cfg = SelectionConfig::new(SelectionMethod::Rbrp, 2, 0);
    assert!(select(&a, &cfg, DEFAULT_RANK_TOL).is_err());
    let cfg = SelectionConfig::new(SelectionMethod::Cpqr, 5, 0);
    assert!(select(&a, &cfg, DEFAULT_RANK_TOL).is_err());
    assert_eq!("SqNorm".parse::<SelectionMethod>().unwrap(), SelectionMethod::Sqnorm);
    assert!("qr".parse::<SelectionMethod>().is_err());
}

#[test]
fn selection_document_json_shape() {
    let doc = SelectionDocument {
        method: SelectionMethod::Cpqr,
        m_p: 2,
        indices: vec![3, 0],
        seed: 9,
        achieved_id_error: 0.25,
        truncated: false,
        notes: vec![],
    };
    let text = serde_json::to_string(&doc).unwrap();
    assert!(text.contains("\"method\":\"cpqr\""));
    assert!(text.contains("\"indices\":[3,0]"));
    let back: SelectionDocument = serde_json::from_str(&text).unwrap();
    assert_eq!(back, doc);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_method_returns_valid_indices_and_id_identity(
        seed in any::<u64>(),
        m in 6usize..20,
        n in 3usize..10,
        m_p in 1usize..5,
        method_ix in 0usize..5,
    ) {
        let mut rng = stream_rng(seed, 99);
        let a = gaussian_matrix::<f64>(m, n, &mut rng);
        let method = [
            SelectionMethod::Cpqr,
            SelectionMethod::Svd,
            SelectionMethod::Sqnorm,
            SelectionMethod::Skcpqr,
            SelectionMethod::Rbrp,
        ][method_ix];
        let mut cfg = SelectionConfig::new(method, m_p, seed);
        cfg.sketch_cols = Some(m_p + 2);
        cfg.block_size = Some(3);
        let sel = select(&a, &cfg, DEFAULT_RANK_TOL).unwrap();
        assert_distinct_in_range(&sel.indices, m);
        prop_assert!(sel.indices.len() <= m_p);
        prop_assert!(sel.truncated || sel.indices.len() == m_p);

        // ||A_Ir P||_F equals the ID error.
        let b = a.matvec(&gaussian_vector(n, &mut rng)).unwrap();
        let f = build_constraint(&a, &b, &sel.indices, DEFAULT_RANK_TOL).unwrap();
        let a_ir_p = f.project_rows(&a.select_rows(f.partition().i_r()).unwrap()).unwrap();
        let lhs = a_ir_p.frobenius_norm();
        let rhs = id_error(&a, &sel.indices, DEFAULT_RANK_TOL).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.max(1e-300) + 1e-12 * a.frobenius_norm());
    }
}
