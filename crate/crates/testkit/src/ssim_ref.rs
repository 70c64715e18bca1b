//! Direct per-window SSIM, used to cross-check the separable implementation.
//!
//! Each window builds its own normalized 2-D Gaussian and computes centred
//! second moments, so no intermediate is shared with the code under test.

pub fn reference_ssim(a: &[u8], b: &[u8], width: usize, height: usize) -> f64 {
    const N: usize = 11;
    const SIGMA: f64 = 1.5;
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);

    let centre = (N as f64 - 1.0) / 2.0;
    let mut weights = [[0.0f64; N]; N];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - centre).powi(2) + (j as f64 - centre).powi(2);
            *w = (-d2 / (2.0 * SIGMA * SIGMA)).exp();
            total += *w;
        }
    }
    for row in weights.iter_mut() {
        for w in row.iter_mut() {
            *w /= total;
        }
    }

    let at = |img: &[u8], x: usize, y: usize| img[y * width + x] as f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for y0 in 0..=height - N {
        for x0 in 0..=width - N {
            let (mut ma, mut mb) = (0.0, 0.0);
            for (i, row) in weights.iter().enumerate() {
                for (j, w) in row.iter().enumerate() {
                    ma += w * at(a, x0 + j, y0 + i);
                    mb += w * at(b, x0 + j, y0 + i);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for (i, row) in weights.iter().enumerate() {
                for (j, w) in row.iter().enumerate() {
                    let da = at(a, x0 + j, y0 + i) - ma;
                    let db = at(b, x0 + j, y0 + i) - mb;
                    va += w * da * da;
                    vb += w * db * db;
                    cov += w * da * db;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}
