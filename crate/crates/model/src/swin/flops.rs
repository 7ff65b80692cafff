/// Feature geometry for the attention cost formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityQuery {
    /// Feature extents in patches.
    pub h: usize,
    pub w: usize,
    /// Channel extent.
    pub c: usize,
    /// Window side in patches.
    pub m: usize,
}

/// Global multi-head self-attention cost: `4 h w C^2 + 2 (h w)^2 C`.
pub fn msa_flops(q: &ComplexityQuery) -> u128 {
    let (h, w, c) = (q.h as u128, q.w as u128, q.c as u128);
    4 * h * w * c * c + 2 * (h * w) * (h * w) * c
}

/// Windowed multi-head self-attention cost: `4 h w C^2 + 2 M^2 h w C`.
pub fn wmsa_flops(q: &ComplexityQuery) -> u128 {
    let (h, w, c, m) = (q.h as u128, q.w as u128, q.c as u128, q.m as u128);
    4 * h * w * c * c + 2 * m * m * h * w * c
}
