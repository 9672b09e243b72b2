//! Small dense-vector helpers over `f64` slices. Dimensions are tiny (1 to 3),
//! so everything works on borrowed slices without allocating.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `out = a - b - c`
#[inline]
pub fn sub3_into(a: &[f64], b: &[f64], c: &[f64], out: &mut [f64]) {
    for (((o, x), y), z) in out.iter_mut().zip(a).zip(b).zip(c) {
        *o = x - y - z;
    }
}

/// `out = a + coef * (a - prev)`
#[inline]
pub fn extrapolate_into(a: &[f64], prev: &[f64], coef: f64, out: &mut [f64]) {
    for ((o, x), p) in out.iter_mut().zip(a).zip(prev) {
        *o = x + coef * (x - p);
    }
}

pub fn dist_sq_flat(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
