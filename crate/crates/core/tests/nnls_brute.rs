use demix_core::dense::Mat;
use demix_core::nnls::{nnls, NnlsConfig};
use demix_core::rng::{gaussian_vec, RngSeed};
use proptest::prelude::*;

/// Least squares restricted to `support` by Gaussian elimination on the normal equations.
fn restricted_ls(c: &Mat, t: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (i, &p) in support.iter().enumerate() {
        for (j, &q) in support.iter().enumerate() {
            a[i][j] = (0..c.rows()).map(|r| c.get(r, p) * c.get(r, q)).sum();
        }
        a[i][k] = (0..c.rows()).map(|r| c.get(r, p) * t[r]).sum();
    }
    for col in 0..k {
        let pivot = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let f = a[row][col] / a[col][col];
                for j in col..=k {
                    a[row][j] -= f * a[col][j];
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

fn objective(c: &Mat, t: &[f64], x: &[f64]) -> f64 {
    (0..c.rows())
        .map(|r| {
            let v: f64 = (0..c.cols()).map(|j| c.get(r, j) * x[j]).sum::<f64>() - t[r];
            v * v
        })
        .sum::<f64>()
        * 0.5
}

/// Best nonnegative restricted least-squares point over all 2³ supports.
fn brute_force(c: &Mat, t: &[f64]) -> Vec<f64> {
    let mut best = (objective(c, t, &[0.0; 3]), vec![0.0; 3]);
    for mask in 1u32..8 {
        let support: Vec<usize> = (0..3).filter(|j| mask & (1 << j) != 0).collect();
        let Some(sol) = restricted_ls(c, t, &support) else { continue };
        if sol.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut x = vec![0.0; 3];
        for (&j, v) in support.iter().zip(sol) {
            x[j] = v;
        }
        let f = objective(c, t, &x);
        if f < best.0 {
            best = (f, x);
        }
    }
    best.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn matches_active_set_enumeration(seed in any::<u64>(), rows in 3usize..7, shift in -1.0f64..1.0) {
        let mut rng = RngSeed::new(seed, 0).rng();
        let c = Mat::from_col_major(rows, 3, gaussian_vec(&mut rng, rows * 3)).unwrap();
        let t: Vec<f64> = gaussian_vec(&mut rng, rows).into_iter().map(|v| v + shift).collect();
        let got = nnls(&c, &t, &NnlsConfig::default()).unwrap();
        let want = brute_force(&c, &t);
        prop_assert!(got.converged);
        prop_assert!(got.coefficients.iter().all(|&v| v >= 0.0));
        for (g, w) in got.coefficients.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-8 * (1.0 + w.abs()), "{:?} vs {:?}", got.coefficients, want);
        }
    }
}
