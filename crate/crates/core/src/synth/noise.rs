//! Smooth random fields for scene backgrounds.

use rand::Rng;

/// Value noise: uniform random values on a lattice with spacing `cell`
/// pixels, smoothstep-interpolated, then standardized to the given mean
/// and standard deviation.
pub fn value_noise(rng: &mut impl Rng, height: usize, width: usize, cell: usize, mean: f64, std: f64) -> Vec<f64> {
    let cell = cell.max(1);
    let gh = height / cell + 2;
    let gw = width / cell + 2;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random::<f64>()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut field = Vec::with_capacity(height * width);
    for r in 0..height {
        let gy = r / cell;
        let ty = smooth((r % cell) as f64 / cell as f64);
        for c in 0..width {
            let gx = c / cell;
            let tx = smooth((c % cell) as f64 / cell as f64);
            let at = |y: usize, x: usize| lattice[y * gw + x];
            let top = at(gy, gx) * (1.0 - tx) + at(gy, gx + 1) * tx;
            let bottom = at(gy + 1, gx) * (1.0 - tx) + at(gy + 1, gx + 1) * tx;
            field.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    let n = field.len() as f64;
    let m = field.iter().sum::<f64>() / n;
    let sd = (field.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    for v in &mut field {
        *v = if sd > 0.0 { mean + (*v - m) / sd * std } else { mean };
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn standardized_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f = value_noise(&mut rng, 48, 128, 16, 300.0, 5.0);
        let n = f.len() as f64;
        let m = f.iter().sum::<f64>() / n;
        let sd = (f.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        assert!((m - 300.0).abs() < 1e-9 && (sd - 5.0).abs() < 1e-9);
        assert!(f.chunks(128).all(|row| row.windows(2).all(|w| (w[0] - w[1]).abs() < 5.0)));
    }
}
