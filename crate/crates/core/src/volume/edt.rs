//! Exact Euclidean distance transform with nearest-feature tracking.

use super::BinaryMask;

/// Distance (in physical units) from every voxel to the nearest foreground
/// voxel of `mask`, and that voxel's flat index. Background-only masks give
/// `+inf` and `usize::MAX`.
///
/// Separable lower-envelope-of-parabolas transform, one axis at a time;
/// ties go to the lower-index parabola along each axis.
pub fn distance_transform(mask: &BinaryMask) -> (Vec<f64>, Vec<usize>) {
    let geo = mask.geometry();
    let [nx, ny, nz] = geo.dims;
    let mut d2: Vec<f64> = mask
        .data()
        .iter()
        .map(|&m| if m != 0 { 0.0 } else { f64::INFINITY })
        .collect();
    let mut feat: Vec<usize> = (0..d2.len())
        .map(|i| if mask.data()[i] != 0 { i } else { usize::MAX })
        .collect();

    let strides = [1, nx, nx * ny];
    let mut scratch = Scratch::default();
    for axis in 0..3 {
        let n = geo.dims[axis];
        let stride = strides[axis];
        let s = geo.spacing[axis];
        let others: Vec<usize> = match axis {
            0 => (0..ny * nz).map(|r| r * nx).collect(),
            1 => (0..nz).flat_map(|k| (0..nx).map(move |i| i + k * nx * ny)).collect(),
            _ => (0..nx * ny).collect(),
        };
        for base in others {
            scratch.f.clear();
            scratch.g.clear();
            for q in 0..n {
                scratch.f.push(d2[base + q * stride]);
                scratch.g.push(feat[base + q * stride]);
            }
            scratch.envelope(s);
            for q in 0..n {
                d2[base + q * stride] = scratch.out_d[q];
                feat[base + q * stride] = scratch.out_f[q];
            }
        }
    }
    (d2.into_iter().map(f64::sqrt).collect(), feat)
}

#[derive(Default)]
struct Scratch {
    f: Vec<f64>,
    g: Vec<usize>,
    v: Vec<usize>,
    z: Vec<f64>,
    out_d: Vec<f64>,
    out_f: Vec<usize>,
}

impl Scratch {
    fn envelope(&mut self, s: f64) {
        let n = self.f.len();
        self.out_d.clear();
        self.out_f.clear();
        self.v.clear();
        self.z.clear();
        let f = &self.f;
        let isect = |a: usize, b: usize| {
            let (pa, pb) = (a as f64 * s, b as f64 * s);
            ((f[b] + pb * pb) - (f[a] + pa * pa)) / (2.0 * (pb - pa))
        };
        for q in (0..n).filter(|&q| f[q].is_finite()) {
            loop {
                match self.v.last() {
                    None => {
                        self.v.push(q);
                        self.z.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&top) => {
                        let x = isect(top, q);
                        if x <= *self.z.last().unwrap() {
                            self.v.pop();
                            self.z.pop();
                        } else {
                            self.v.push(q);
                            self.z.push(x);
                            break;
                        }
                    }
                }
            }
        }
        if self.v.is_empty() {
            self.out_d.resize(n, f64::INFINITY);
            self.out_f.resize(n, usize::MAX);
            return;
        }
        let mut k = 0;
        for q in 0..n {
            let x = q as f64 * s;
            while k + 1 < self.v.len() && self.z[k + 1] < x {
                k += 1;
            }
            let v = self.v[k];
            let dx = x - v as f64 * s;
            self.out_d.push(dx * dx + f[v]);
            self.out_f.push(self.g[v]);
        }
    }
}
