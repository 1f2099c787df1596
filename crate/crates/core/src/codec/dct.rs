//! Orthonormal 8x8 type-II DCT.

use std::sync::OnceLock;

pub type Block8 = [[f64; 8]; 8];

fn basis() -> &'static Block8 {
    static BASIS: OnceLock<Block8> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (k, row) in c.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (n, x) in row.iter_mut().enumerate() {
                *x = alpha * (((2 * n + 1) * k) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        c
    })
}

/// `C X C^T`
pub fn dct8_forward(x: &Block8) -> Block8 {
    let c = basis();
    let mut tmp = [[0.0; 8]; 8];
    for k in 0..8 {
        for j in 0..8 {
            tmp[k][j] = (0..8).map(|n| c[k][n] * x[n][j]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for k in 0..8 {
        for l in 0..8 {
            out[k][l] = (0..8).map(|j| tmp[k][j] * c[l][j]).sum();
        }
    }
    out
}

/// `C^T Y C`
pub fn dct8_inverse(y: &Block8) -> Block8 {
    let c = basis();
    let mut tmp = [[0.0; 8]; 8];
    for n in 0..8 {
        for l in 0..8 {
            tmp[n][l] = (0..8).map(|k| c[k][n] * y[k][l]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for n in 0..8 {
        for m in 0..8 {
            out[n][m] = (0..8).map(|l| tmp[n][l] * c[l][m]).sum();
        }
    }
    out
}
