//! Orthogonal maps of R^8 built from octonion left multiplication.

use libm::sqrt;

use crate::error::{Error, Result};

/// Quaternionic triples `e_i e_j = e_k` (and cyclic shifts) on the
/// imaginary units `e_1..e_7`.
const TRIPLES: [[usize; 3]; 7] = [[1, 2, 4], [2, 3, 5], [3, 4, 6], [4, 5, 7], [5, 6, 1], [6, 7, 2], [7, 1, 3]];

/// `e_i e_j = sign · e_k`, stored as `(sign, k)`.
const fn table() -> [[(i8, u8); 8]; 8] {
    let mut t = [[(0i8, 0u8); 8]; 8];
    let mut i = 0;
    while i < 8 {
        t[0][i] = (1, i as u8);
        t[i][0] = (1, i as u8);
        if i > 0 {
            t[i][i] = (-1, 0);
        }
        i += 1;
    }
    let mut n = 0;
    while n < 7 {
        let [a, b, c] = TRIPLES[n];
        let cyc = [[a, b, c], [b, c, a], [c, a, b]];
        let mut r = 0;
        while r < 3 {
            let [x, y, z] = cyc[r];
            t[x][y] = (1, z as u8);
            t[y][x] = (-1, z as u8);
            r += 1;
        }
        n += 1;
    }
    t
}

const MUL: [[(i8, u8); 8]; 8] = table();

/// Octonion product of coefficient vectors (index 0 is the real part).
pub fn mul(a: &[f64; 8], b: &[f64; 8]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            let (s, k) = MUL[i][j];
            out[k as usize] += f64::from(s) * ai * bj;
        }
    }
    out
}

/// The signed permutation matrix of `x ↦ e_i x`.
pub fn basis_matrix(i: usize) -> [[i8; 8]; 8] {
    let mut m = [[0i8; 8]; 8];
    for (j, &(s, k)) in MUL[i].iter().enumerate() {
        m[k as usize][j] = s;
    }
    m
}

pub fn dot(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64; 8]) -> f64 {
    sqrt(dot(a, a))
}

/// Blocks shorter than this are treated as degenerate.
pub const MIN_NORM: f64 = 1e-12;

/// `M = Σ α_i A_i`, where `A_i` is left multiplication by `e_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMap {
    pub alpha: [f64; 8],
}

impl RotationMap {
    pub fn identity() -> Self {
        let mut alpha = [0.0; 8];
        alpha[0] = 1.0;
        Self { alpha }
    }

    /// The map sending `x/‖x‖` to `y/‖y‖`.
    ///
    /// With `α_i = ⟨ŷ, e_i x̂⟩` the map is left multiplication by
    /// `a = ŷ x̂*`, and `(ŷ x̂*) x̂ = ŷ` by alternativity.
    pub fn between(x: &[f64; 8], y: &[f64; 8]) -> Result<Self> {
        let (nx, ny) = (norm(x), norm(y));
        if !(nx > MIN_NORM && ny > MIN_NORM) {
            return Err(Error::DegenerateBlock { index: 0 });
        }
        let xh = x.map(|v| v / nx);
        let yh = y.map(|v| v / ny);
        let mut alpha = [0.0; 8];
        for (i, a) in alpha.iter_mut().enumerate() {
            let mut e = [0.0; 8];
            e[i] = 1.0;
            *a = dot(&yh, &mul(&e, &xh));
        }
        Ok(Self { alpha })
    }

    pub fn apply(&self, x: &[f64; 8]) -> [f64; 8] {
        mul(&self.alpha, x)
    }

    /// Dense `M` for inspection and tests.
    pub fn matrix(&self) -> [[f64; 8]; 8] {
        let mut m = [[0.0; 8]; 8];
        for (i, &a) in self.alpha.iter().enumerate() {
            let b = basis_matrix(i);
            for r in 0..8 {
                for c in 0..8 {
                    m[r][c] += a * f64::from(b[r][c]);
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_vec(rng: &mut ChaCha8Rng) -> [f64; 8] {
        core::array::from_fn(|_| rng.sample(StandardNormal))
    }

    fn unit(i: usize) -> [f64; 8] {
        let mut e = [0.0; 8];
        e[i] = 1.0;
        e
    }

    #[test]
    fn basis_is_signed_permutation() {
        assert_eq!(basis_matrix(0), core::array::from_fn(|r| core::array::from_fn(|c| i8::from(r == c))));
        for i in 0..8 {
            let m = basis_matrix(i);
            for r in 0..8 {
                assert_eq!(m[r].iter().filter(|&&v| v != 0).count(), 1);
                assert_eq!((0..8).filter(|&c| m[c][r] != 0).count(), 1);
            }
        }
    }

    #[test]
    fn normed_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = random_vec(&mut rng);
            let b = random_vec(&mut rng);
            assert!((norm(&mul(&a, &b)) - norm(&a) * norm(&b)).abs() < 1e-12 * norm(&a) * norm(&b));
        }
    }

    #[test]
    fn images_of_unit_vector_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let mut u = random_vec(&mut rng);
            let n = norm(&u);
            u.iter_mut().for_each(|v| *v /= n);
            let imgs: [[f64; 8]; 8] = core::array::from_fn(|i| mul(&unit(i), &u));
            for i in 0..8 {
                for j in 0..8 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(&imgs[i], &imgs[j]) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trivial_maps() {
        let m = RotationMap::between(&unit(0), &unit(0)).unwrap();
        assert_eq!(m, RotationMap::identity());
        let m = RotationMap::between(&unit(0), &unit(1)).unwrap();
        let img = m.apply(&unit(0));
        assert!(img.iter().zip(unit(1)).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(matches!(RotationMap::between(&[0.0; 8], &unit(1)), Err(Error::DegenerateBlock { .. })));
    }

    #[test]
    fn maps_random_pairs_orthogonally() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = random_vec(&mut rng);
            let y = random_vec(&mut rng);
            let m = RotationMap::between(&x, &y).unwrap();
            let img = m.apply(&x.map(|v| v / norm(&x)));
            let ny = norm(&y);
            assert!(img.iter().zip(y).all(|(a, b)| (a - b / ny).abs() < 1e-12));
            let mm = m.matrix();
            for r in 0..8 {
                for c in 0..8 {
                    let g: f64 = (0..8).map(|k| mm[k][r] * mm[k][c]).sum();
                    assert!((g - f64::from(u8::from(r == c))).abs() < 1e-10);
                }
            }
            let z = random_vec(&mut rng);
            assert!((norm(&m.apply(&z)) - norm(&z)).abs() < 1e-10 * norm(&z));
        }
    }
}
