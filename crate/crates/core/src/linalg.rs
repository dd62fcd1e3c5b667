//! Complex banded LU with partial pivoting, plus a bordered variant for the
//! eigenvalue-correction system of the index refinement.
//!
//! Storage follows the LAPACK band convention: a matrix with `kl` subdiagonals
//! and `ku` superdiagonals keeps `kl + ku + 1` stored diagonals plus `kl` rows
//! of fill-in headroom for pivoting.

use crate::error::{Error, Result};
use crate::num::Cx;
use rug::Float;

/// Band matrix of order `n` with bandwidths (`kl`, `ku`).
pub struct Banded {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    prec: u32,
    /// Row-major: `data[i][d]` holds A[i, i - kl + d] for d in 0..width.
    /// The leading `kl` slots beyond `ku` are fill-in space used by the LU.
    data: Vec<Vec<Cx>>,
}

impl Banded {
    pub fn zeroed(n: usize, kl: usize, ku: usize, prec: u32) -> Self {
        let width = 2 * kl + ku + 1;
        Banded {
            n,
            kl,
            ku,
            prec,
            data: (0..n).map(|_| vec![Cx::zero(prec); width]).collect(),
        }
    }

    /// Sets A[i, j]; panics if (i, j) is outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: Cx) {
        let d = j as isize - i as isize + self.kl as isize;
        assert!(
            d >= 0 && (d as usize) < self.kl + self.ku + 1,
            "entry ({i}, {j}) outside band"
        );
        self.data[i][d as usize] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> Cx {
        let d = j as isize - i as isize + self.kl as isize;
        if d < 0 || d as usize >= 2 * self.kl + self.ku + 1 {
            Cx::zero(self.prec)
        } else {
            self.data[i][d as usize].clone()
        }
    }

    /// Overwrites row `i` with the unit row e_i, turning the equation into a
    /// normalization constraint. Only valid before factoring.
    pub fn replace_row_with_unit(&mut self, i: usize) {
        for d in 0..(self.kl + self.ku + 1) {
            self.data[i][d] = Cx::zero(self.prec);
        }
        self.data[i][self.kl] = Cx::one(self.prec);
    }

    /// In-place LU with partial pivoting restricted to the band.
    /// Returns the pivot permutation; fails on an exactly zero pivot column.
    pub fn factor(&mut self) -> Result<Vec<usize>> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let width = 2 * kl + ku + 1;
        let mut piv = vec![0usize; n];
        for j in 0..n {
            // Pivot among rows j..=min(j+kl, n-1), column j.
            let last = (j + kl).min(n - 1);
            let mut best = j;
            let mut best_mag = self.entry_mag(j, j);
            for r in (j + 1)..=last {
                let m = self.entry_mag(r, j);
                if m > best_mag {
                    best_mag = m;
                    best = r;
                }
            }
            piv[j] = best;
            if best != j {
                self.swap_rows_from_col(j, best, j);
            }
            let pivot = self.get(j, j);
            if pivot.is_zero() {
                return Err(Error::SingularSystem(format!(
                    "zero pivot at elimination column {j}"
                )));
            }
            for r in (j + 1)..=last {
                let mut m = &self.get(r, j) / &pivot;
                // Store the multiplier in the eliminated slot.
                let d = (j as isize - r as isize + kl as isize) as usize;
                for c in (j + 1)..=(j + kl + ku).min(n - 1) {
                    let u = self.get(j, c);
                    if !u.is_zero() {
                        let dd = (c as isize - r as isize + kl as isize) as usize;
                        debug_assert!(dd < width);
                        let mut t = self.data[r][dd].clone();
                        t.sub_mul(&m, &u);
                        self.data[r][dd] = t;
                    }
                }
                std::mem::swap(&mut self.data[r][d], &mut m);
            }
        }
        Ok(piv)
    }

    fn entry_mag(&self, i: usize, j: usize) -> Float {
        let v = self.get(i, j);
        let p = self.prec;
        let mut m = Float::with_val(p, v.re.abs_ref());
        m += Float::with_val(p, v.im.abs_ref());
        m
    }

    /// Swaps the stored parts of rows a and b for columns >= from.
    fn swap_rows_from_col(&mut self, a: usize, b: usize, from: usize) {
        let kl = self.kl;
        let ku = self.ku;
        let n = self.n;
        let hi = (from + kl + ku).min(n - 1);
        for c in from..=hi {
            let da = c as isize - a as isize + kl as isize;
            let db = c as isize - b as isize + kl as isize;
            if da >= 0 && db >= 0 {
                let (da, db) = (da as usize, db as usize);
                if da < 2 * kl + ku + 1 && db < 2 * kl + ku + 1 {
                    if a < b {
                        let (lo, hir) = self.data.split_at_mut(b);
                        std::mem::swap(&mut lo[a][da], &mut hir[0][db]);
                    } else if b < a {
                        let (lo, hir) = self.data.split_at_mut(a);
                        std::mem::swap(&mut hir[0][da], &mut lo[b][db]);
                    }
                }
            }
        }
    }

    /// Solves A x = rhs given the factorization from `factor`.
    pub fn solve_factored(&self, piv: &[usize], rhs: &mut [Cx]) {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        // Forward: apply pivots and multipliers.
        for j in 0..n {
            rhs.swap(j, piv[j]);
            let last = (j + kl).min(n - 1);
            for r in (j + 1)..=last {
                let d = (j as isize - r as isize + kl as isize) as usize;
                let m = self.data[r][d].clone();
                if !m.is_zero() {
                    let b = rhs[j].clone();
                    rhs[r].sub_mul(&m, &b);
                }
            }
        }
        // Backward: U x = y.
        for j in (0..n).rev() {
            let hi = (j + kl + ku).min(n - 1);
            let mut acc = rhs[j].clone();
            for c in (j + 1)..=hi {
                let u = self.get(j, c);
                if !u.is_zero() {
                    let x = rhs[c].clone();
                    acc.sub_mul(&u, &x);
                }
            }
            rhs[j] = &acc / &self.get(j, j);
        }
    }

    /// Factors and solves in one call, consuming the matrix contents.
    pub fn solve(mut self, rhs: &mut [Cx]) -> Result<()> {
        let piv = self.factor()?;
        self.solve_factored(&piv, rhs);
        Ok(())
    }
}

/// Solution of the bordered system
///
/// ```text
/// [ A  d ] [x]   [0]
/// [ b* 0 ] [s] = [1]
/// ```
///
/// where A is banded and nearly singular at convergence of the refinement,
/// while the bordered matrix stays well conditioned.
#[derive(Debug)]
pub struct BorderedSolution {
    pub x: Vec<Cx>,
    pub s: Cx,
}

pub fn solve_bordered(mut a: Banded, d: &[Cx], b: &[Cx]) -> Result<BorderedSolution> {
    let n = a.n;
    let prec = a.prec;
    assert_eq!(d.len(), n);
    assert_eq!(b.len(), n);
    let mut dd: Vec<Cx> = d.to_vec();

    // Factor A while carrying the border column through the same row ops.
    let kl = a.kl;
    let ku = a.ku;
    let width = 2 * kl + ku + 1;
    let mut piv = vec![0usize; n];
    for j in 0..n {
        let last = (j + kl).min(n - 1);
        let mut best = j;
        let mut best_mag = a.entry_mag(j, j);
        for r in (j + 1)..=last {
            let m = a.entry_mag(r, j);
            if m > best_mag {
                best_mag = m;
                best = r;
            }
        }
        piv[j] = best;
        if best != j {
            a.swap_rows_from_col(j, best, j);
            dd.swap(j, best);
        }
        let pivot = a.get(j, j);
        if pivot.is_zero() {
            return Err(Error::SingularSystem(format!(
                "zero pivot at bordered elimination column {j}"
            )));
        }
        for r in (j + 1)..=last {
            let mut m = &a.get(r, j) / &pivot;
            let dsl = (j as isize - r as isize + kl as isize) as usize;
            for c in (j + 1)..=(j + kl + ku).min(n - 1) {
                let u = a.get(j, c);
                if !u.is_zero() {
                    let dda = (c as isize - r as isize + kl as isize) as usize;
                    debug_assert!(dda < width);
                    let mut t = a.data[r][dda].clone();
                    t.sub_mul(&m, &u);
                    a.data[r][dda] = t;
                }
            }
            let dj = dd[j].clone();
            dd[r].sub_mul(&m, &dj);
            std::mem::swap(&mut a.data[r][dsl], &mut m);
        }
    }

    // Eliminate the border row b* against U, tracking the corner and RHS.
    // Border RHS starts at 1; the main RHS is identically zero, so the
    // forward pass leaves it zero and only the border bookkeeping matters.
    let mut r: Vec<Cx> = b.to_vec();
    // Apply the same permutations/multipliers the columns of A received:
    // the border row is a ROW, so it is eliminated against U columns instead.
    let mut corner = Cx::zero(prec);
    for j in 0..n {
        let rj = r[j].clone();
        if rj.is_zero() {
            continue;
        }
        let m = &rj / &a.get(j, j);
        let hi = (j + kl + ku).min(n - 1);
        for c in (j + 1)..=hi {
            let u = a.get(j, c);
            if !u.is_zero() {
                let mut t = r[c].clone();
                t.sub_mul(&m, &u);
                r[c] = t;
            }
        }
        corner.sub_mul(&m, &dd[j]);
        r[j] = m;
    }

    // Forward pass on the main RHS [0; ...] is all zeros; border RHS is 1.
    if corner.is_zero() {
        return Err(Error::SingularSystem(
            "bordered corner vanished; system is singular".into(),
        ));
    }
    let s = &Cx::one(prec) / &corner;

    // Back-substitute U x = -d~ * s.
    let mut x: Vec<Cx> = (0..n)
        .map(|i| {
            let mut v = Cx::zero(prec);
            v.sub_mul(&dd[i], &s);
            v
        })
        .collect();
    for j in (0..n).rev() {
        let hi = (j + kl + ku).min(n - 1);
        let mut acc = x[j].clone();
        for c in (j + 1)..=hi {
            let u = a.get(j, c);
            if !u.is_zero() {
                let t = x[c].clone();
                acc.sub_mul(&u, &t);
            }
        }
        x[j] = &acc / &a.get(j, j);
    }

    Ok(BorderedSolution { x, s })
}

// The forward elimination of the border row above folds L^-1 P into the row
// operations implicitly: because the main right-hand side is zero, only U,
// the transformed border column, and the corner affect the answer.

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dense_solve(mut a: Vec<Vec<Cx>>, mut rhs: Vec<Cx>) -> Vec<Cx> {
        let n = rhs.len();
        for j in 0..n {
            let mut best = j;
            let mut mag = a[j][j].abs();
            for r in (j + 1)..n {
                let m = a[r][j].abs();
                if m > mag {
                    mag = m;
                    best = r;
                }
            }
            a.swap(j, best);
            rhs.swap(j, best);
            let piv = a[j][j].clone();
            for r in (j + 1)..n {
                let m = &a[r][j] / &piv;
                for c in j..n {
                    let t = a[j][c].clone();
                    a[r][c].sub_mul(&m, &t);
                }
                let t = rhs[j].clone();
                rhs[r].sub_mul(&m, &t);
            }
        }
        for j in (0..n).rev() {
            let mut acc = rhs[j].clone();
            for c in (j + 1)..n {
                let t = rhs[c].clone();
                acc.sub_mul(&a[j][c], &t);
            }
            rhs[j] = &acc / &a[j][j];
        }
        rhs
    }

    fn random_banded(
        rng: &mut StdRng,
        n: usize,
        kl: usize,
        ku: usize,
        prec: u32,
    ) -> (Banded, Vec<Vec<Cx>>) {
        let mut b = Banded::zeroed(n, kl, ku, prec);
        let mut dense = vec![vec![Cx::zero(prec); n]; n];
        for i in 0..n {
            for j in 0..n {
                let d = j as isize - i as isize;
                if d >= -(kl as isize) && d <= ku as isize {
                    let v = Cx::from_f64(prec, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    b.set(i, j, v.clone());
                    dense[i][j] = v;
                }
            }
        }
        // Make it comfortably nonsingular.
        for i in 0..n {
            let bump = Cx::from_f64(prec, 3.0, 0.5);
            let t = &dense[i][i] + &bump;
            b.set(i, i, t.clone());
            dense[i][i] = t;
        }
        (b, dense)
    }

    #[test]
    fn banded_matches_dense_reference() {
        let mut rng = StdRng::seed_from_u64(7);
        for &(n, kl, ku) in &[(12usize, 1usize, 5usize), (30, 2, 3), (9, 1, 1)] {
            let (banded, dense) = random_banded(&mut rng, n, kl, ku, 113);
            let rhs: Vec<Cx> = (0..n)
                .map(|_| Cx::from_f64(113, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut x = rhs.clone();
            banded.solve(&mut x).unwrap();
            let want = dense_solve(dense, rhs);
            for (a, b) in x.iter().zip(want.iter()) {
                let d = (a - b).abs().to_f64();
                assert!(d < 1e-25, "banded vs dense mismatch: {d}");
            }
        }
    }

    #[test]
    fn bordered_agrees_with_dense_augmented() {
        let mut rng = StdRng::seed_from_u64(11);
        let (n, kl, ku) = (14usize, 1usize, 5usize);
        let (banded, dense) = random_banded(&mut rng, n, kl, ku, 113);
        let d: Vec<Cx> = (0..n)
            .map(|_| Cx::from_f64(113, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let bp: Vec<Cx> = (0..n)
            .map(|_| Cx::from_f64(113, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();

        // Dense (n+1) x (n+1) augmented system.
        let m = n + 1;
        let mut aug = vec![vec![Cx::zero(113); m]; m];
        for i in 0..n {
            for j in 0..n {
                aug[i][j] = dense[i][j].clone();
            }
            aug[i][n] = d[i].clone();
            aug[n][i] = bp[i].clone();
        }
        let mut rhs = vec![Cx::zero(113); m];
        rhs[n] = Cx::one(113);
        let want = dense_solve(aug, rhs);

        let got = solve_bordered(banded, &d, &bp).unwrap();
        for i in 0..n {
            let e = (&got.x[i] - &want[i]).abs().to_f64();
            assert!(e < 1e-24, "x[{i}] off by {e}");
        }
        let e = (&got.s - &want[n]).abs().to_f64();
        assert!(e < 1e-24, "s off by {e}");
    }

    #[test]
    fn bordered_survives_near_singular_core() {
        // Refinement converges through systems whose core A drifts within
        // ~1e-13 of singular while the bordered matrix stays well posed.
        let mut rng = StdRng::seed_from_u64(23);
        let prec = 113;
        let (n, kl, ku) = (10usize, 1usize, 5usize);
        let (mut banded, mut dense) = random_banded(&mut rng, n, kl, ku, prec);
        // Flatten the last row to a tiny diagonal residue: rank n-1 + 1e-21.
        for j in 0..n {
            let d = j as isize - (n as isize - 1) + kl as isize;
            if d >= 0 && (d as usize) < kl + ku + 1 {
                banded.set(n - 1, j, Cx::zero(prec));
            }
            dense[n - 1][j] = Cx::zero(prec);
        }
        banded.set(n - 1, n - 1, Cx::real(prec, 1e-21));
        dense[n - 1][n - 1] = Cx::real(prec, 1e-21);

        let d: Vec<Cx> = (0..n)
            .map(|_| Cx::from_f64(prec, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let b: Vec<Cx> = (0..n)
            .map(|_| Cx::from_f64(prec, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();

        let m = n + 1;
        let mut aug = vec![vec![Cx::zero(prec); m]; m];
        for i in 0..n {
            for j in 0..n {
                aug[i][j] = dense[i][j].clone();
            }
            aug[i][n] = d[i].clone();
            aug[n][i] = b[i].clone();
        }
        let mut rhs = vec![Cx::zero(prec); m];
        rhs[n] = Cx::one(prec);
        let want = dense_solve(aug, rhs);

        let got = solve_bordered(banded, &d, &b).unwrap();
        let scale = 1.0
            + got
                .x
                .iter()
                .map(|v| v.abs().to_f64())
                .fold(0.0f64, f64::max);
        for i in 0..n {
            let e = (&got.x[i] - &want[i]).abs().to_f64();
            assert!(e < 1e-8 * scale, "x[{i}] off by {e} at scale {scale}");
        }
        let e = (&got.s - &want[n]).abs().to_f64();
        assert!(e < 1e-8 * scale);
    }

    #[test]
    fn exactly_singular_core_is_reported() {
        let prec = 113;
        let n = 5;
        let mut a = Banded::zeroed(n, 1, 2, prec);
        for i in 0..n - 1 {
            a.set(i, i, Cx::real(prec, 2.0));
        }
        // Last row identically zero: elimination must flag the zero pivot.
        let d: Vec<Cx> = (0..n).map(|i| Cx::real(prec, 1.0 + i as f64)).collect();
        let b: Vec<Cx> = (0..n).map(|_| Cx::real(prec, 1.0)).collect();
        match solve_bordered(a, &d, &b) {
            Err(crate::error::Error::SingularSystem(_)) => {}
            other => panic!("expected SingularSystem, got {other:?}"),
        }
    }
}
