//! RBF kernel and precomputed Gram matrices.

pub type Point = [f64; 4];

pub fn rbf(a: &Point, b: &Point, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `1 / (d · Var(x))` with the variance taken over every component of every
/// point. Falls back to `1 / d` for constant data.
pub fn scale_gamma(points: &[Point]) -> f64 {
    let d = 4.0;
    let n = (points.len() * 4) as f64;
    if n == 0.0 {
        return 1.0 / d;
    }
    let mean = points.iter().flatten().sum::<f64>() / n;
    let var = points.iter().flatten().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d * var)
    } else {
        1.0 / d
    }
}

/// Dense symmetric kernel matrix over a point set.
#[derive(Clone, Debug)]
pub struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn new(points: &[Point], gamma: f64) -> Self {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
            for j in 0..i {
                let k = rbf(&points[i], &points[j], gamma);
                data[i * n + j] = k;
                data[j * n + i] = k;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// View of a Gram matrix restricted to an index subset.
#[derive(Clone, Copy, Debug)]
pub struct SubKernel<'a> {
    gram: &'a Gram,
    idx: &'a [usize],
}

impl<'a> SubKernel<'a> {
    pub fn new(gram: &'a Gram, idx: &'a [usize]) -> Self {
        Self { gram, idx }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gram.get(self.idx[i], self.idx[j])
    }

    /// `out[t] = K(i, t)` for every t in the subset.
    pub fn fill_row(&self, i: usize, out: &mut [f64]) {
        let row = self.gram.row(self.idx[i]);
        for (o, &g) in out.iter_mut().zip(self.idx) {
            *o = row[g];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbf_values() {
        let a = [0.0, 0.0, 0.0, 0.0];
        let b = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(rbf(&a, &a, 3.0), 1.0);
        assert!((rbf(&a, &b, 0.5) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gamma_matches_component_variance() {
        // components {0, 1} in equal measure: variance 1/4, gamma = 1
        let pts = [[0.0, 1.0, 0.0, 1.0], [1.0, 0.0, 1.0, 0.0]];
        assert!((scale_gamma(&pts) - 1.0).abs() < 1e-12);
        assert_eq!(scale_gamma(&[[0.5; 4]]), 0.25);
    }

    #[test]
    fn sub_kernel_indexes_gram() {
        let pts = [[0.0; 4], [0.1, 0.0, 0.0, 0.0], [0.5, 0.5, 0.5, 0.5]];
        let g = Gram::new(&pts, 2.0);
        let idx = [2, 0];
        let s = SubKernel::new(&g, &idx);
        assert_eq!(s.get(0, 1), rbf(&pts[2], &pts[0], 2.0));
        let mut row = [0.0; 2];
        s.fill_row(1, &mut row);
        assert_eq!(row, [g.get(0, 2), 1.0]);
    }
}
