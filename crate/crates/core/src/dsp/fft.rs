//! Iterative radix-2 FFT, sized for the fixed 512-point analysis window.

use std::f64::consts::PI;

pub struct Fft {
    n: usize,
    // twiddles[k] = e^{-2πik/n} for k < n/2
    tw_re: Vec<f64>,
    tw_im: Vec<f64>,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT size must be a power of two");
        let half = n / 2;
        let mut tw_re = Vec::with_capacity(half);
        let mut tw_im = Vec::with_capacity(half);
        for k in 0..half {
            let ang = -2.0 * PI * k as f64 / n as f64;
            tw_re.push(ang.cos());
            tw_im.push(ang.sin());
        }
        Fft { n, tw_re, tw_im }
    }

    /// In-place forward transform.
    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        assert_eq!(re.len(), n);
        assert_eq!(im.len(), n);
        // bit reversal
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let (wr, wi) = (self.tw_re[k * step], self.tw_im[k * step]);
                    let (i, j) = (start + k, start + k + len / 2);
                    let tr = re[j] * wr - im[j] * wi;
                    let ti = re[j] * wi + im[j] * wr;
                    re[j] = re[i] - tr;
                    im[j] = im[i] - ti;
                    re[i] += tr;
                    im[i] += ti;
                }
            }
            len <<= 1;
        }
    }

    /// Power spectrum of a real frame, bins 0..=n/2. The frame is
    /// zero-padded to the FFT size.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        assert!(frame.len() <= self.n);
        let mut re = vec![0.0; self.n];
        let mut im = vec![0.0; self.n];
        re[..frame.len()].copy_from_slice(frame);
        self.forward(&mut re, &mut im);
        (0..=self.n / 2)
            .map(|k| re[k] * re[k] + im[k] * im[k])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matches_naive_dft() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.1).sin()).collect();
        let fft = Fft::new(n);
        let mut re = x.clone();
        let mut im = vec![0.0; n];
        fft.forward(&mut re, &mut im);
        for k in 0..n {
            let (mut wr, mut wi) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                wr += v * ang.cos();
                wi += v * ang.sin();
            }
            assert_abs_diff_eq!(re[k], wr, epsilon = 1e-9);
            assert_abs_diff_eq!(im[k], wi, epsilon = 1e-9);
        }
    }

    #[test]
    fn parseval_energy_identity() {
        let n = 512;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos() * 0.8).collect();
        let fft = Fft::new(n);
        let mut re = x.clone();
        let mut im = vec![0.0; n];
        fft.forward(&mut re, &mut im);
        let spec_energy: f64 =
            re.iter().zip(&im).map(|(r, i)| r * r + i * i).sum::<f64>() / n as f64;
        let time_energy: f64 = x.iter().map(|v| v * v).sum();
        let rel = (spec_energy - time_energy).abs() / time_energy;
        assert!(rel < 1e-12, "relative error {rel}");
    }
}
