//! Grid domain, scalar/vector fields and the discrete differential operators
//! used by the max-flow solver and the training losses.
//!
//! The gradient is a forward difference with Neumann (zero-flux) boundaries;
//! the divergence is its exact negative adjoint, so that
//! `⟨∇u, p⟩ + ⟨u, div p⟩ = 0` holds to machine precision for every pair of
//! fields. The ADMM substeps rely on this identity to descend the energy.

use serde::{Deserialize, Serialize};

/// A 2D pixel grid with unit spacing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridDomain {
    height: usize,
    width: usize,
}

impl GridDomain {
    /// Create a grid of `height` rows by `width` columns. Both must be ≥ 1.
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "grid must be at least 1x1");
        Self { height, width }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false // height, width >= 1 by construction
    }

    /// Row-major flat index of `(row, col)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }
}

/// A real-valued function sampled on a [`GridDomain`], stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    domain: GridDomain,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(domain: GridDomain) -> Self {
        Self {
            domain,
            values: vec![0.0; domain.len()],
        }
    }

    pub fn constant(domain: GridDomain, value: f64) -> Self {
        assert!(value.is_finite(), "field values must be finite");
        Self {
            domain,
            values: vec![value; domain.len()],
        }
    }

    /// Wrap a row-major vector of values. Length must equal `height * width`
    /// and every value must be finite.
    pub fn from_vec(domain: GridDomain, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), domain.len(), "value count must match domain");
        assert!(
            values.iter().all(|v| v.is_finite()),
            "field values must be finite"
        );
        Self { domain, values }
    }

    pub fn from_fn(domain: GridDomain, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(domain.len());
        for row in 0..domain.height() {
            for col in 0..domain.width() {
                values.push(f(row, col));
            }
        }
        Self::from_vec(domain, values)
    }

    pub fn domain(&self) -> GridDomain {
        self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[self.domain.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let idx = self.domain.index(row, col);
        self.values[idx] = value;
    }

    /// Pointwise map into a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same domain.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.domain, other.domain, "domain mismatch");
        Self {
            domain: self.domain,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Inner product with a fixed (row-major) summation order.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.domain, other.domain, "domain mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.domain.len() as f64
    }

    /// L2 norm over pixels, row-major summation order.
    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|&v| v * v).sum::<f64>().sqrt()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A 2-component vector field collocated with the pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    x: ScalarField,
    y: ScalarField,
}

impl VectorField {
    pub fn zeros(domain: GridDomain) -> Self {
        Self {
            x: ScalarField::zeros(domain),
            y: ScalarField::zeros(domain),
        }
    }

    pub fn new(x: ScalarField, y: ScalarField) -> Self {
        assert_eq!(x.domain(), y.domain(), "components must share a domain");
        Self { x, y }
    }

    pub fn domain(&self) -> GridDomain {
        self.x.domain()
    }

    pub fn x(&self) -> &ScalarField {
        &self.x
    }

    pub fn y(&self) -> &ScalarField {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut ScalarField {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut ScalarField {
        &mut self.y
    }

    /// Pointwise primal (TV) magnitude under `mode`.
    pub fn magnitude(&self, mode: TvMode) -> ScalarField {
        self.x.zip_map(&self.y, |gx, gy| mode.magnitude(gx, gy))
    }

    /// Pointwise constraint-side magnitude under `mode`; see
    /// [`TvMode::dual_magnitude`].
    pub fn dual_magnitude(&self, mode: TvMode) -> ScalarField {
        self.x.zip_map(&self.y, |gx, gy| mode.dual_magnitude(gx, gy))
    }

    /// Inner product of vector fields: `Σ x·x' + y·y'`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }
}

/// Magnitude convention for the total-variation term and the spatial-flow
/// capacity constraint.
///
/// `Isotropic` is the Euclidean vector magnitude and the default. `Anisotropic`
/// treats the two components independently, which makes the binary energy an
/// exact 4-neighbour cut cost and therefore comparable against a brute-force
/// discrete min-cut.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvMode {
    #[default]
    Isotropic,
    Anisotropic,
}

impl TvMode {
    /// Primal magnitude used by the TV energy: Euclidean for isotropic, the
    /// component sum for anisotropic.
    #[inline]
    pub fn magnitude(self, gx: f64, gy: f64) -> f64 {
        match self {
            TvMode::Isotropic => (gx * gx + gy * gy).sqrt(),
            TvMode::Anisotropic => gx.abs() + gy.abs(),
        }
    }

    /// Magnitude governing the flow capacity constraint, the dual norm of
    /// [`TvMode::magnitude`]: Euclidean for isotropic, the component maximum
    /// for anisotropic (the L1 TV pairs with an L∞ capacity ball).
    #[inline]
    pub fn dual_magnitude(self, gx: f64, gy: f64) -> f64 {
        match self {
            TvMode::Isotropic => (gx * gx + gy * gy).sqrt(),
            TvMode::Anisotropic => gx.abs().max(gy.abs()),
        }
    }
}

/// Forward-difference gradient with Neumann boundaries: the difference across
/// the last row/column is zero.
pub fn gradient(u: &ScalarField) -> VectorField {
    let d = u.domain();
    let (h, w) = (d.height(), d.width());
    let mut gx = ScalarField::zeros(d);
    let mut gy = ScalarField::zeros(d);
    for row in 0..h {
        for col in 0..w {
            if col + 1 < w {
                gx.set(row, col, u.at(row, col + 1) - u.at(row, col));
            }
            if row + 1 < h {
                gy.set(row, col, u.at(row + 1, col) - u.at(row, col));
            }
        }
    }
    VectorField::new(gx, gy)
}

/// Backward-difference divergence, the exact negative adjoint of [`gradient`]:
/// `⟨∇u, p⟩ = −⟨u, div p⟩` for all fields. The x component in the last column
/// and the y component in the last row never contribute (the gradient never
/// produces them).
pub fn divergence(p: &VectorField) -> ScalarField {
    let d = p.domain();
    let (h, w) = (d.height(), d.width());
    let (px, py) = (p.x(), p.y());
    ScalarField::from_fn(d, |row, col| {
        let mut v = 0.0;
        if col + 1 < w {
            v += px.at(row, col);
        }
        if col > 0 {
            v -= px.at(row, col - 1);
        }
        if row + 1 < h {
            v += py.at(row, col);
        }
        if row > 0 {
            v -= py.at(row - 1, col);
        }
        v
    })
}

/// Pointwise upper clamp `min(f, cap)`. No lower bound is imposed.
pub fn project_scalar_capacity(f: &ScalarField, cap: &ScalarField) -> ScalarField {
    f.zip_map(cap, f64::min)
}

/// Project a vector field into the pointwise capacity constraint.
///
/// Isotropic: rescale to Euclidean magnitude `cap` wherever the magnitude
/// exceeds it. Anisotropic: clamp each component into `[−cap, cap]`.
pub fn project_vector_capacity(p: &VectorField, cap: &ScalarField, mode: TvMode) -> VectorField {
    assert_eq!(p.domain(), cap.domain(), "domain mismatch");
    match mode {
        TvMode::Isotropic => {
            let mut out = p.clone();
            let n = p.domain().len();
            for i in 0..n {
                let gx = p.x().values()[i];
                let gy = p.y().values()[i];
                let c = cap.values()[i];
                let mag = (gx * gx + gy * gy).sqrt();
                if mag > c {
                    let scale = c / mag;
                    let mut sx = gx * scale;
                    let mut sy = gy * scale;
                    // Rounding can land the rescaled vector outside the ball;
                    // renormalize a bounded number of times so the projection
                    // is exactly idempotent. Near the denormal range the
                    // recomputed magnitude is too coarse to trust, and the
                    // only safe point on the ray is the origin.
                    for _ in 0..4 {
                        let m = (sx * sx + sy * sy).sqrt();
                        if m <= c {
                            break;
                        }
                        let s = c / m;
                        sx *= s;
                        sy *= s;
                    }
                    if (sx * sx + sy * sy).sqrt() > c {
                        sx = 0.0;
                        sy = 0.0;
                    }
                    out.x_mut().values_mut()[i] = sx;
                    out.y_mut().values_mut()[i] = sy;
                }
            }
            out
        }
        TvMode::Anisotropic => {
            let clamp = |comp: &ScalarField| comp.zip_map(cap, |v, c| v.clamp(-c, c));
            VectorField::new(clamp(p.x()), clamp(p.y()))
        }
    }
}

/// Weighted total variation `Σ c_edge · |∇u|` with the magnitude given by
/// `mode`. Row-major summation order.
pub fn tv_energy(u: &ScalarField, c_edge: &ScalarField, mode: TvMode) -> f64 {
    assert_eq!(u.domain(), c_edge.domain(), "domain mismatch");
    let grad = gradient(u);
    let d = u.domain();
    let mut total = 0.0;
    for i in 0..d.len() {
        let gx = grad.x().values()[i];
        let gy = grad.y().values()[i];
        total += c_edge.values()[i] * mode.magnitude(gx, gy);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(domain: GridDomain, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_fn(domain, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn gradient_of_1x3_row() {
        let d = GridDomain::new(1, 3);
        let u = ScalarField::from_vec(d, vec![0.0, 1.0, 3.0]);
        let g = gradient(&u);
        assert_eq!(g.x().values(), &[1.0, 2.0, 0.0]);
        assert_eq!(g.y().values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let d = GridDomain::new(5, 4);
        let u = ScalarField::constant(d, 2.5);
        let g = gradient(&u);
        assert!(g.x().values().iter().all(|&v| v == 0.0));
        assert!(g.y().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_of_1x3_example() {
        let d = GridDomain::new(1, 3);
        let p = VectorField::new(
            ScalarField::from_vec(d, vec![1.0, 2.0, 0.0]),
            ScalarField::zeros(d),
        );
        assert_eq!(divergence(&p).values(), &[1.0, 1.0, -2.0]);
    }

    #[test]
    fn divergence_of_zero_is_zero() {
        let d = GridDomain::new(4, 4);
        let div = divergence(&VectorField::zeros(d));
        assert!(div.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_identity_on_random_8x8() {
        let d = GridDomain::new(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = random_field(d, &mut rng);
            let p = VectorField::new(random_field(d, &mut rng), random_field(d, &mut rng));
            let lhs = gradient(&u).dot(&p);
            let rhs = u.dot(&divergence(&p));
            assert!((lhs + rhs).abs() < 1e-12, "adjoint identity violated");
        }
    }

    #[test]
    fn scalar_projection_examples() {
        let d = GridDomain::new(1, 3);
        let f = ScalarField::from_vec(d, vec![1.5, 0.5, -0.3]);
        let cap = ScalarField::constant(d, 1.0);
        let p = project_scalar_capacity(&f, &cap);
        assert_eq!(p.values(), &[1.0, 0.5, -0.3]);
    }

    #[test]
    fn vector_projection_examples() {
        let d = GridDomain::new(1, 1);
        let p = VectorField::new(
            ScalarField::from_vec(d, vec![3.0]),
            ScalarField::from_vec(d, vec![4.0]),
        );
        let inside = project_vector_capacity(&p, &ScalarField::constant(d, 10.0), TvMode::Isotropic);
        assert_eq!((inside.x().values()[0], inside.y().values()[0]), (3.0, 4.0));

        let p2 = VectorField::new(
            ScalarField::from_vec(d, vec![6.0]),
            ScalarField::from_vec(d, vec![8.0]),
        );
        let iso = project_vector_capacity(&p2, &ScalarField::constant(d, 5.0), TvMode::Isotropic);
        assert!((iso.x().values()[0] - 3.0).abs() < 1e-12);
        assert!((iso.y().values()[0] - 4.0).abs() < 1e-12);

        let aniso =
            project_vector_capacity(&p2, &ScalarField::constant(d, 5.0), TvMode::Anisotropic);
        assert_eq!((aniso.x().values()[0], aniso.y().values()[0]), (5.0, 5.0));
    }

    #[test]
    fn tv_energy_of_vertical_boundary() {
        let d = GridDomain::new(4, 4);
        // Left half 0, right half 1: boundary of length 4.
        let u = ScalarField::from_fn(d, |_, col| if col >= 2 { 1.0 } else { 0.0 });
        let ones = ScalarField::constant(d, 1.0);
        assert!((tv_energy(&u, &ones, TvMode::Isotropic) - 4.0).abs() < 1e-12);
        let half = ScalarField::constant(d, 0.5);
        assert!((tv_energy(&u, &half, TvMode::Isotropic) - 2.0).abs() < 1e-12);
        let c = ScalarField::constant(d, 3.0);
        assert_eq!(tv_energy(&c, &ones, TvMode::Isotropic), 0.0);
    }

    proptest! {
        #[test]
        fn adjoint_identity_holds(seed in 0u64..500, h in 1usize..32, w in 1usize..32) {
            let d = GridDomain::new(h, w);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(d, &mut rng);
            let p = VectorField::new(random_field(d, &mut rng), random_field(d, &mut rng));
            let lhs = gradient(&u).dot(&p);
            let rhs = u.dot(&divergence(&p));
            prop_assert!((lhs + rhs).abs() < 1e-12);
        }

        #[test]
        fn projections_are_idempotent_and_feasible(seed in 0u64..200, iso in any::<bool>()) {
            let d = GridDomain::new(6, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mode = if iso { TvMode::Isotropic } else { TvMode::Anisotropic };
            let p = VectorField::new(random_field(d, &mut rng), random_field(d, &mut rng));
            let cap = ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..0.8));
            let once = project_vector_capacity(&p, &cap, mode);
            let twice = project_vector_capacity(&once, &cap, mode);
            prop_assert_eq!(&once, &twice);
            let mags = once.dual_magnitude(mode);
            for i in 0..d.len() {
                prop_assert!(mags.values()[i] <= cap.values()[i] + 1e-12);
            }

            let f = random_field(d, &mut rng);
            let sonce = project_scalar_capacity(&f, &cap);
            let stwice = project_scalar_capacity(&sonce, &cap);
            prop_assert_eq!(&sonce, &stwice);
        }

        #[test]
        fn tv_energy_nonnegative_zero_iff_constant(seed in 0u64..200) {
            let d = GridDomain::new(5, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(d, &mut rng);
            let c = ScalarField::constant(d, 0.7);
            let e = tv_energy(&u, &c, TvMode::Isotropic);
            prop_assert!(e >= 0.0);
            // A random continuous field is constant with probability zero.
            prop_assert!(e > 0.0);
            let k = ScalarField::constant(d, rng.gen_range(-3.0..3.0));
            prop_assert_eq!(tv_energy(&k, &c, TvMode::Isotropic), 0.0);
        }
    }
}
