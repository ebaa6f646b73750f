//! Platonic rotation groups, their rotation axes and the twisted boundary matrix.
//!
//! Groups are generated by closure from two explicit generators per kind. The
//! collision set of the symmetric problem is the union of the rotation axes of
//! the non-identity elements.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entry-wise tolerance used when deciding whether two group elements coincide.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Tolerance for deduplication during closure; products of a few generators
/// stay well inside it.
const CLOSURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Tetrahedral,
    Octahedral,
    Icosahedral,
}

impl GroupKind {
    pub fn order(self) -> usize {
        match self {
            GroupKind::Tetrahedral => 12,
            GroupKind::Octahedral => 24,
            GroupKind::Icosahedral => 60,
        }
    }

    pub fn axis_count(self) -> usize {
        match self {
            GroupKind::Tetrahedral => 7,
            GroupKind::Octahedral => 13,
            GroupKind::Icosahedral => 31,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::Tetrahedral => "tetrahedral",
            GroupKind::Octahedral => "octahedral",
            GroupKind::Icosahedral => "icosahedral",
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tetrahedral" | "tetrahedron" => Ok(GroupKind::Tetrahedral),
            "octahedral" | "octahedron" | "cube" => Ok(GroupKind::Octahedral),
            "icosahedral" | "icosahedron" | "dodecahedron" => Ok(GroupKind::Icosahedral),
            other => Err(Error::Parse(format!("unknown symmetry kind `{other}`"))),
        }
    }
}

/// A proper rotation together with its axis/angle decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationElement {
    pub matrix: Matrix3<f64>,
    /// Canonical unit axis; `None` for the identity.
    pub axis: Option<Vector3<f64>>,
    /// Rotation angle about `axis` in `(0, 2π)`; zero for the identity.
    pub angle: f64,
    /// Smallest `k ≥ 1` with `matrix^k = I`.
    pub order: usize,
}

impl RotationElement {
    pub fn identity() -> Self {
        RotationElement {
            matrix: Matrix3::identity(),
            axis: None,
            angle: 0.0,
            order: 1,
        }
    }

    /// Decompose an orthogonal matrix with determinant +1.
    pub fn from_matrix(matrix: Matrix3<f64>) -> Self {
        let trace = matrix.trace();
        let cos = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
        if (matrix - Matrix3::identity()).amax() < CLOSURE_TOL {
            return RotationElement::identity();
        }
        let skew = (matrix - matrix.transpose()) * 0.5;
        let vee = Vector3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]);
        let axis = if vee.norm() > 1e-6 {
            vee.normalize()
        } else {
            // Half turn: R + I = 2 a aᵀ, take its largest column.
            let sym = matrix + Matrix3::identity();
            let col = (0..3)
                .map(|j| sym.column(j).into_owned())
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap();
            col.normalize()
        };
        let axis = canonical_axis(axis);
        let sin = axis.dot(&vee);
        let mut angle = sin.atan2(cos);
        if angle <= 0.0 {
            angle += 2.0 * PI;
        }
        let mut order = 1;
        let mut power = matrix;
        while (power - Matrix3::identity()).amax() > CLOSURE_TOL && order < 64 {
            power *= matrix;
            order += 1;
        }
        RotationElement {
            matrix,
            axis: Some(axis),
            angle,
            order,
        }
    }

    /// Rotation by `angle` about the (not necessarily unit) `axis`.
    pub fn about(axis: Vector3<f64>, angle: f64) -> Self {
        RotationElement::from_matrix(rodrigues(axis, angle))
    }

    pub fn is_identity(&self) -> bool {
        self.axis.is_none()
    }
}

/// Flip `v` so its first non-negligible coordinate is positive.
pub fn canonical_axis(v: Vector3<f64>) -> Vector3<f64> {
    // Adding 0.0 turns -0.0 into +0.0.
    let v = v.map(|c| if c.abs() < 1e-12 { 0.0 } else { c });
    for c in v.iter() {
        if c.abs() > 1e-9 {
            return if *c < 0.0 { -v } else { v }.map(|c| c + 0.0);
        }
    }
    v
}

pub fn rodrigues(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let a = axis.normalize();
    let k = a.cross_matrix();
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// The rotation group of a Platonic polyhedron.
#[derive(Debug, Clone)]
pub struct PolyhedralGroup {
    pub kind: GroupKind,
    /// Elements sorted by angle, then lexicographically by axis; identity first.
    pub elements: Vec<RotationElement>,
    /// Distinct rotation axes with antipodes identified (the collision set Γ).
    pub axes: Vec<Vector3<f64>>,
}

fn generators(kind: GroupKind) -> [Matrix3<f64>; 2] {
    // Cyclic permutation of the coordinates: threefold about (1,1,1).
    let cyclic = Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    match kind {
        GroupKind::Tetrahedral => [cyclic, Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))],
        GroupKind::Octahedral => [
            cyclic,
            Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
        ],
        GroupKind::Icosahedral => {
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            [cyclic, rodrigues(Vector3::new(0.0, 1.0, phi), 2.0 * PI / 5.0)]
        }
    }
}

fn close_under_products(gens: &[Matrix3<f64>]) -> Vec<Matrix3<f64>> {
    let mut found = vec![Matrix3::identity()];
    let mut frontier = vec![Matrix3::identity()];
    while let Some(m) = frontier.pop() {
        for g in gens {
            let p = g * m;
            if !found.iter().any(|f| (f - p).amax() < CLOSURE_TOL) {
                found.push(p);
                frontier.push(p);
            }
        }
        assert!(found.len() <= 60, "closure exceeded the largest Platonic group");
    }
    found
}

fn cmp_axis(a: &Option<Vector3<f64>>, b: &Option<Vector3<f64>>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => {
            for k in 0..3 {
                if (x[k] - y[k]).abs() > 1e-9 {
                    return x[k].total_cmp(&y[k]);
                }
            }
            Ordering::Equal
        }
    }
}

impl PolyhedralGroup {
    pub fn new(kind: GroupKind) -> Self {
        build_group(kind)
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Index of the element equal to `m` (entry-wise within `tol`).
    pub fn find(&self, m: &Matrix3<f64>, tol: f64) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| (e.matrix - m).amax() < tol)
    }

    /// `table[i][j]` is the index of `elements[i] * elements[j]`.
    pub fn multiplication_table(&self) -> Vec<Vec<Option<usize>>> {
        self.elements
            .iter()
            .map(|a| {
                self.elements
                    .iter()
                    .map(|b| self.find(&(a.matrix * b.matrix), MEMBERSHIP_TOL * 10.0))
                    .collect()
            })
            .collect()
    }

    /// Non-identity matrices, in element order.
    pub fn nontrivial_matrices(&self) -> Vec<Matrix3<f64>> {
        self.elements
            .iter()
            .filter(|e| !e.is_identity())
            .map(|e| e.matrix)
            .collect()
    }

    /// The element rotating by `2π·fraction` about `axes[axis_index]`.
    pub fn twist_element(&self, axis_index: usize, fraction: f64) -> Result<RotationElement> {
        if fraction.rem_euclid(1.0).abs() < 1e-12 {
            return Ok(RotationElement::identity());
        }
        let axis = self.axes.get(axis_index).ok_or_else(|| {
            Error::InvalidTwist(format!(
                "axis index {axis_index} out of range ({} axes)",
                self.axes.len()
            ))
        })?;
        let m = rodrigues(*axis, 2.0 * PI * fraction);
        let idx = self.find(&m, 1e-9).ok_or_else(|| {
            Error::InvalidTwist(format!(
                "rotation by {fraction} turns about axis {axis_index} is not in the {} group",
                self.kind
            ))
        })?;
        Ok(self.elements[idx].clone())
    }
}

/// Build the rotation group of the given kind.
pub fn build_group(kind: GroupKind) -> PolyhedralGroup {
    let mut elements: Vec<RotationElement> = close_under_products(&generators(kind))
        .into_iter()
        .map(RotationElement::from_matrix)
        .collect();
    elements.sort_by(|a, b| {
        if (a.angle - b.angle).abs() > 1e-9 {
            a.angle.total_cmp(&b.angle)
        } else {
            cmp_axis(&a.axis, &b.axis)
        }
    });
    let axes = collision_axes(&elements);
    PolyhedralGroup {
        kind,
        elements,
        axes,
    }
}

/// Distinct canonical axes of the non-identity elements, sorted lexicographically.
pub fn collision_axes(elements: &[RotationElement]) -> Vec<Vector3<f64>> {
    let mut axes: Vec<Vector3<f64>> = Vec::new();
    for a in elements.iter().filter_map(|e| e.axis) {
        if !axes.iter().any(|b| (a - b).amax() < 1e-9) {
            axes.push(a);
        }
    }
    axes.sort_by(|a, b| cmp_axis(&Some(*a), &Some(*b)));
    axes
}

/// Smallest distance from `point` to any line of the collision set.
pub fn min_distance_to_gamma(point: &Vector3<f64>, group: &PolyhedralGroup) -> Result<f64> {
    distance_to_axes(point, &group.axes)
}

pub fn distance_to_axes(point: &Vector3<f64>, axes: &[Vector3<f64>]) -> Result<f64> {
    if point.norm() == 0.0 {
        return Err(Error::Domain("distance to Γ is undefined at the origin".into()));
    }
    Ok(axes
        .iter()
        .map(|a| point.cross(a).norm())
        .fold(f64::INFINITY, f64::min))
}

/// Boundary twist `x(T/M) = S x(0)` with `S = diag(R, R)`.
#[derive(Debug, Clone)]
pub struct TwistSpec {
    pub twist: RotationElement,
    pub repetitions: usize,
    pub s: Matrix6<f64>,
}

impl TwistSpec {
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.twist.matrix
    }

    /// Apply `S` to a reduced state `(u, v)`.
    pub fn apply(&self, x: &[f64; 6]) -> [f64; 6] {
        let r = &self.twist.matrix;
        let u = r * Vector3::new(x[0], x[1], x[2]);
        let v = r * Vector3::new(x[3], x[4], x[5]);
        [u[0], u[1], u[2], v[0], v[1], v[2]]
    }
}

/// Block-diagonal twist matrix. `R^M` must be the identity so that the
/// generating particle is periodic over the whole period.
pub fn twist_matrix(r: &RotationElement, repetitions: usize) -> Result<TwistSpec> {
    if repetitions < 1 {
        return Err(Error::InvalidTwist("repetitions M must be at least 1".into()));
    }
    let mut power = Matrix3::<f64>::identity();
    for _ in 0..repetitions {
        power *= r.matrix;
    }
    if (power - Matrix3::identity()).amax() > 1e-9 {
        return Err(Error::InvalidTwist(format!(
            "R has order {} which does not divide M = {repetitions}",
            r.order
        )));
    }
    let mut s = Matrix6::zeros();
    s.fixed_view_mut::<3, 3>(0, 0).copy_from(&r.matrix);
    s.fixed_view_mut::<3, 3>(3, 3).copy_from(&r.matrix);
    Ok(TwistSpec {
        twist: r.clone(),
        repetitions,
        s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_counts() {
        for kind in [GroupKind::Tetrahedral, GroupKind::Octahedral, GroupKind::Icosahedral] {
            let g = build_group(kind);
            assert_eq!(g.order(), kind.order());
            assert_eq!(g.axes.len(), kind.axis_count());
            assert!(g.elements[0].is_identity());
            assert_eq!(g.elements[0].order, 1);
        }
    }

    #[test]
    fn elements_are_proper_rotations() {
        let g = build_group(GroupKind::Icosahedral);
        for e in &g.elements {
            let m = e.matrix;
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-14);
            assert!((m.determinant() - 1.0).abs() < 1e-14);
            if let Some(a) = e.axis {
                assert!((m * a - a).amax() < 1e-14);
                assert!(e.angle > 0.0 && e.angle < 2.0 * PI);
            }
        }
    }

    #[test]
    fn closure_inverses_identity() {
        for kind in [GroupKind::Tetrahedral, GroupKind::Octahedral, GroupKind::Icosahedral] {
            let g = build_group(kind);
            let table = g.multiplication_table();
            assert!(table.iter().flatten().all(|e| e.is_some()), "{kind} not closed");
            for (i, row) in table.iter().enumerate() {
                assert!(row.contains(&Some(0)), "element {i} of {kind} has no inverse");
            }
        }
    }

    #[test]
    fn ordering_is_by_angle() {
        let g = build_group(GroupKind::Octahedral);
        for pair in g.elements.windows(2) {
            assert!(pair[0].angle <= pair[1].angle + 1e-9);
        }
    }

    #[test]
    fn identity_only_has_no_axes() {
        assert!(collision_axes(&[RotationElement::identity()]).is_empty());
    }

    #[test]
    fn axes_are_canonical() {
        let g = build_group(GroupKind::Icosahedral);
        for a in &g.axes {
            assert!((a.norm() - 1.0).abs() < 1e-14);
            assert_eq!(canonical_axis(*a), *a);
        }
    }

    #[test]
    fn twist_rejects_zero_repetitions() {
        assert!(matches!(
            twist_matrix(&RotationElement::identity(), 0),
            Err(Error::InvalidTwist(_))
        ));
    }

    #[test]
    fn twist_identity() {
        let t = twist_matrix(&RotationElement::identity(), 1).unwrap();
        assert_eq!(t.s, Matrix6::identity());
    }

    #[test]
    fn twist_fourfold_returns_after_four() {
        let g = build_group(GroupKind::Octahedral);
        let r = g.elements.iter().find(|e| e.order == 4).unwrap();
        let t = twist_matrix(r, 4).unwrap();
        assert!((t.s.transpose() * t.s - Matrix6::identity()).amax() < 1e-14);
        let x = nalgebra::Vector6::new(0.3, -1.2, 0.7, 2.0, 0.1, -0.4);
        let y = t.s * t.s * t.s * t.s * x;
        assert!((y - x).amax() < 1e-13);
        assert!(twist_matrix(r, 3).is_err());
    }

    #[test]
    fn twist_lookup_by_axis_and_fraction() {
        let g = build_group(GroupKind::Tetrahedral);
        let diag = g
            .axes
            .iter()
            .position(|a| (a - Vector3::new(1.0, 1.0, 1.0).normalize()).amax() < 1e-12)
            .unwrap();
        let r = g.twist_element(diag, 1.0 / 3.0).unwrap();
        assert_eq!(r.order, 3);
        assert!((r.angle - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!(g.twist_element(diag, 0.25).is_err());
    }

    #[test]
    fn distance_on_axis_is_zero() {
        let g = build_group(GroupKind::Tetrahedral);
        let d = min_distance_to_gamma(&(g.axes[2] * 3.0), &g).unwrap();
        assert!(d < 1e-15);
        assert!(min_distance_to_gamma(&Vector3::zeros(), &g).is_err());
    }

    #[test]
    fn distance_is_sine_of_angle() {
        // Rotate the z axis by θ toward (1,-1,0)/√2, away from every other axis.
        let g = build_group(GroupKind::Tetrahedral);
        let theta: f64 = 0.1;
        let dir = Vector3::new(1.0, -1.0, 0.0).normalize();
        let p = (Vector3::z() * theta.cos() + dir * theta.sin()) * 2.5;
        let d = min_distance_to_gamma(&p, &g).unwrap();
        assert!((d - 2.5 * theta.sin()).abs() < 1e-14);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("cube".parse::<GroupKind>().unwrap(), GroupKind::Octahedral);
        assert!("prism".parse::<GroupKind>().is_err());
    }
}
