//! Fixed quadrature rules on the reference triangle and the unit interval.

/// Symmetric 6-point rule on triangles, exact for degree ≤ 4.
/// Entries are barycentric coordinates and weights summing to 1 (multiply by area).
pub const TRIANGLE_DEG4: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_964_886;
    const WA: f64 = 0.223_381_589_678_011_466;
    const B: f64 = 0.091_576_213_509_770_743;
    const WB: f64 = 0.109_951_743_655_321_868;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

/// 3-point Gauss–Legendre on [0,1], exact for degree ≤ 5. Weights sum to 1.
pub const EDGE_GAUSS3: [(f64, f64); 3] = {
    const S: f64 = 0.387_298_334_620_741_7; // sqrt(3/5)/2
    [(0.5 - S, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + S, 5.0 / 18.0)]
};

#[inline]
pub fn barycentric_point(p: [[f64; 2]; 3], l: [f64; 3]) -> [f64; 2] {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

#[inline]
pub fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}
