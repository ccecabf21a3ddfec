//! Intrinsic manifold operators: retractions, inverse retractions,
//! retraction-induced transports and orthonormal tangent frames for
//! Euclidean spaces, unit quaternions, the 2-sphere and their products.
//!
//! Points are stored in ambient coordinates (4 for a quaternion, 3 for a
//! sphere point). Tangent vectors are stored as coordinates in the
//! orthonormal frame at their base point, so coordinate 2-norms are
//! Riemannian norms. For quaternions the frame is the body frame
//! `v = q ⊗ [0, e_j]`.

pub mod quaternion;
pub mod sphere;

use nalgebra::{DMatrix, DVector, Matrix3x2, Vector2, Vector3, Vector4};

use crate::error::{Error, Result};

/// A manifold component and its operator bundle.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldChart {
    Euclidean(usize),
    UnitQuaternion,
    Sphere2,
    Product(Vec<ManifoldChart>),
}

/// A leaf component of a (possibly nested) product chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leaf {
    Euclidean(usize),
    UnitQuaternion,
    Sphere2,
}

impl Leaf {
    pub fn intrinsic_dim(self) -> usize {
        match self {
            Leaf::Euclidean(n) => n,
            Leaf::UnitQuaternion => 3,
            Leaf::Sphere2 => 2,
        }
    }

    pub fn ambient_dim(self) -> usize {
        match self {
            Leaf::Euclidean(n) => n,
            Leaf::UnitQuaternion => 4,
            Leaf::Sphere2 => 3,
        }
    }

    pub fn is_manifold(self) -> bool {
        !matches!(self, Leaf::Euclidean(_))
    }

    /// Short tag used in file headers: `R<n>`, `Q`, `S2`.
    pub fn tag(self) -> String {
        match self {
            Leaf::Euclidean(n) => format!("R{n}"),
            Leaf::UnitQuaternion => "Q".to_string(),
            Leaf::Sphere2 => "S2".to_string(),
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "Q" => Ok(Leaf::UnitQuaternion),
            "S2" => Ok(Leaf::Sphere2),
            t if t.starts_with('R') => t[1..]
                .parse()
                .map(Leaf::Euclidean)
                .map_err(|_| Error::Parse(format!("bad chart tag '{tag}'"))),
            _ => Err(Error::Parse(format!("bad chart tag '{tag}'"))),
        }
    }
}

/// A leaf with its offsets inside the flattened ambient and intrinsic vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub leaf: Leaf,
    pub ambient_offset: usize,
    pub intrinsic_offset: usize,
}

impl Component {
    pub fn ambient_range(&self) -> std::ops::Range<usize> {
        self.ambient_offset..self.ambient_offset + self.leaf.ambient_dim()
    }

    pub fn intrinsic_range(&self) -> std::ops::Range<usize> {
        self.intrinsic_offset..self.intrinsic_offset + self.leaf.intrinsic_dim()
    }
}

/// A point in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub coords: DVector<f64>,
}

impl Point {
    pub fn new(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Frame coordinates of a tangent vector, together with its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentCoords {
    pub coords: DVector<f64>,
    pub base: Point,
}

impl TangentCoords {
    pub fn new(base: Point, coords: DVector<f64>) -> Self {
        Self { coords, base }
    }

    pub fn zero(chart: &ManifoldChart, base: Point) -> Self {
        Self::new(base, DVector::zeros(chart.intrinsic_dim()))
    }
}

fn quat_at(p: &DVector<f64>, off: usize) -> Vector4<f64> {
    Vector4::new(p[off], p[off + 1], p[off + 2], p[off + 3])
}

fn vec3_at(p: &DVector<f64>, off: usize) -> Vector3<f64> {
    Vector3::new(p[off], p[off + 1], p[off + 2])
}

impl ManifoldChart {
    /// Flattens nested products into one product.
    pub fn product(parts: Vec<ManifoldChart>) -> Self {
        ManifoldChart::Product(parts)
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.leaves().iter().map(|l| l.intrinsic_dim()).sum()
    }

    pub fn ambient_dim(&self) -> usize {
        self.leaves().iter().map(|l| l.ambient_dim()).sum()
    }

    pub fn leaves(&self) -> Vec<Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<Leaf>) {
        match self {
            ManifoldChart::Euclidean(n) => out.push(Leaf::Euclidean(*n)),
            ManifoldChart::UnitQuaternion => out.push(Leaf::UnitQuaternion),
            ManifoldChart::Sphere2 => out.push(Leaf::Sphere2),
            ManifoldChart::Product(parts) => parts.iter().for_each(|p| p.collect_leaves(out)),
        }
    }

    pub fn from_leaves(leaves: &[Leaf]) -> Self {
        let parts: Vec<_> = leaves
            .iter()
            .map(|l| match *l {
                Leaf::Euclidean(n) => ManifoldChart::Euclidean(n),
                Leaf::UnitQuaternion => ManifoldChart::UnitQuaternion,
                Leaf::Sphere2 => ManifoldChart::Sphere2,
            })
            .collect();
        if parts.len() == 1 {
            parts.into_iter().next().unwrap()
        } else {
            ManifoldChart::Product(parts)
        }
    }

    pub fn components(&self) -> Vec<Component> {
        let mut a = 0;
        let mut i = 0;
        self.leaves()
            .into_iter()
            .map(|leaf| {
                let c = Component {
                    leaf,
                    ambient_offset: a,
                    intrinsic_offset: i,
                };
                a += leaf.ambient_dim();
                i += leaf.intrinsic_dim();
                c
            })
            .collect()
    }

    /// Space-separated leaf tags, e.g. `R7 Q R3`.
    pub fn signature(&self) -> String {
        self.leaves()
            .iter()
            .map(|l| l.tag())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn is_euclidean(&self) -> bool {
        self.leaves().iter().all(|l| !l.is_manifold())
    }

    fn check_point(&self, p: &Point, what: &str) -> Result<()> {
        if p.len() != self.ambient_dim() {
            return Err(Error::Argument(format!(
                "{what} has {} ambient coordinates, chart expects {}",
                p.len(),
                self.ambient_dim()
            )));
        }
        Ok(())
    }

    fn check_tangent(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.intrinsic_dim() {
            return Err(Error::Argument(format!(
                "tangent has {} coordinates, chart expects {}",
                v.len(),
                self.intrinsic_dim()
            )));
        }
        Ok(())
    }

    /// Largest unit-norm violation over the quaternion and sphere blocks
    /// (zero for purely Euclidean charts).
    pub fn membership_violation(&self, p: &Point) -> f64 {
        self.components()
            .iter()
            .filter(|c| c.leaf.is_manifold())
            .map(|c| (p.coords.rows(c.ambient_offset, c.leaf.ambient_dim()).norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        p.len() == self.ambient_dim() && self.membership_violation(p) <= tol
    }

    /// `R_base(v)` with `v` given in frame coordinates at `base`.
    pub fn retract_coords(&self, base: &Point, v: &DVector<f64>) -> Result<Point> {
        self.check_point(base, "base")?;
        self.check_tangent(v)?;
        let mut out = base.coords.clone();
        for c in self.components() {
            let (a, i) = (c.ambient_offset, c.intrinsic_offset);
            match c.leaf {
                Leaf::Euclidean(n) => {
                    for k in 0..n {
                        out[a + k] = base.coords[a + k] + v[i + k];
                    }
                }
                Leaf::UnitQuaternion => {
                    let phi = vec3_at(v, i);
                    if phi == Vector3::zeros() {
                        continue;
                    }
                    let q = quaternion::mul(&quat_at(&base.coords, a), &quaternion::quat_exp(&phi));
                    out.rows_mut(a, 4).copy_from(&q);
                }
                Leaf::Sphere2 => {
                    let cv = Vector2::new(v[i], v[i + 1]);
                    if cv == Vector2::zeros() {
                        continue;
                    }
                    let s = sphere::retract(&vec3_at(&base.coords, a), &cv);
                    out.rows_mut(a, 3).copy_from(&s);
                }
            }
        }
        Ok(Point::new(out))
    }

    pub fn retract(&self, base: &Point, v: &TangentCoords) -> Result<Point> {
        if &v.base != base {
            return Err(Error::Argument(
                "tangent vector is not based at the retraction base point".into(),
            ));
        }
        self.retract_coords(base, &v.coords)
    }

    /// Frame coordinates `v` at `base` with `R_base(v) == target`.
    pub fn inverse_retract(&self, base: &Point, target: &Point) -> Result<DVector<f64>> {
        self.check_point(base, "base")?;
        self.check_point(target, "target")?;
        let mut out = DVector::zeros(self.intrinsic_dim());
        for c in self.components() {
            let (a, i) = (c.ambient_offset, c.intrinsic_offset);
            match c.leaf {
                Leaf::Euclidean(n) => {
                    for k in 0..n {
                        out[i + k] = target.coords[a + k] - base.coords[a + k];
                    }
                }
                Leaf::UnitQuaternion => {
                    let q0 = quat_at(&base.coords, a);
                    let q1 = quat_at(&target.coords, a);
                    let phi = quaternion::log_principal(&quaternion::mul(&quaternion::conj(&q0), &q1))?;
                    out.rows_mut(i, 3).copy_from(&phi);
                }
                Leaf::Sphere2 => {
                    let w = sphere::inverse_retract(&vec3_at(&base.coords, a), &vec3_at(&target.coords, a))?;
                    out.rows_mut(i, 2).copy_from(&w);
                }
            }
        }
        Ok(out)
    }

    /// Matrix of the retraction-induced transport `T_{from→to}` in frame
    /// coordinates. Block diagonal over components; identity when
    /// `from == to`.
    pub fn transport_matrix(&self, from: &Point, to: &Point) -> Result<DMatrix<f64>> {
        self.check_point(from, "from")?;
        self.check_point(to, "to")?;
        let n = self.intrinsic_dim();
        let mut t = DMatrix::identity(n, n);
        if from == to {
            return Ok(t);
        }
        for c in self.components() {
            let (a, i) = (c.ambient_offset, c.intrinsic_offset);
            match c.leaf {
                Leaf::Euclidean(_) => {}
                Leaf::UnitQuaternion => {
                    let m = quaternion::transport_matrix(&quat_at(&from.coords, a), &quat_at(&to.coords, a))?;
                    t.view_mut((i, i), (3, 3)).copy_from(&m);
                }
                Leaf::Sphere2 => {
                    let m = sphere::transport_matrix(&vec3_at(&from.coords, a), &vec3_at(&to.coords, a))?;
                    t.view_mut((i, i), (2, 2)).copy_from(&m);
                }
            }
        }
        Ok(t)
    }

    pub fn transport(&self, from: &Point, to: &Point, v: &TangentCoords) -> Result<TangentCoords> {
        if &v.base != from {
            return Err(Error::Argument("tangent vector is not based at `from`".into()));
        }
        Ok(TangentCoords::new(to.clone(), self.transport_matrix(from, to)? * &v.coords))
    }

    /// Orthonormal frame at `base`: ambient_dim × intrinsic_dim matrix whose
    /// columns are the tangent directions of the frame coordinates.
    pub fn frame(&self, base: &Point) -> Result<DMatrix<f64>> {
        self.check_point(base, "base")?;
        let mut f = DMatrix::zeros(self.ambient_dim(), self.intrinsic_dim());
        for c in self.components() {
            let (a, i) = (c.ambient_offset, c.intrinsic_offset);
            match c.leaf {
                Leaf::Euclidean(n) => {
                    for k in 0..n {
                        f[(a + k, i + k)] = 1.0;
                    }
                }
                Leaf::UnitQuaternion => {
                    let q = quat_at(&base.coords, a);
                    for j in 0..3 {
                        let col = quaternion::mul(&q, &quaternion::pure(&Vector3::ith(j, 1.0)));
                        f.view_mut((a, i + j), (4, 1)).copy_from(&col);
                    }
                }
                Leaf::Sphere2 => {
                    let m: Matrix3x2<f64> = sphere::frame(&vec3_at(&base.coords, a));
                    f.view_mut((a, i), (3, 2)).copy_from(&m);
                }
            }
        }
        Ok(f)
    }

    /// Frame coordinates of an ambient tangent vector at `base`.
    pub fn to_frame_coords(&self, base: &Point, ambient: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.frame(base)?.transpose() * ambient)
    }

    /// Ambient vector of frame coordinates at `base`.
    pub fn from_frame_coords(&self, base: &Point, coords: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_tangent(coords)?;
        Ok(self.frame(base)? * coords)
    }

    /// Norm of the component of an ambient vector normal to the manifold at
    /// `base`; zero for tangent vectors.
    pub fn normal_residual(&self, base: &Point, ambient: &DVector<f64>) -> f64 {
        self.components()
            .iter()
            .filter(|c| c.leaf.is_manifold())
            .map(|c| {
                let p = base.coords.rows(c.ambient_offset, c.leaf.ambient_dim());
                let v = ambient.rows(c.ambient_offset, c.leaf.ambient_dim());
                p.dot(&v).abs()
            })
            .fold(0.0, f64::max)
    }
}
