use rand_chacha::ChaCha8Rng;

use crate::diffnet::{GradStore, Mat, ParamStore, Real};
use crate::error::{ModelError, ModelResult};
use crate::geometry::NeighborIndex;

/// Sum of neighbor feature rows for every vertex.
fn aggregate<T: Real>(graph: &NeighborIndex, f: &Mat<T>) -> Mat<T> {
    let mut out = Mat::zeros(graph.len(), f.cols());
    for v in 0..graph.len() {
        for q in graph.indices(v) {
            let src = f.row(q).to_vec();
            for (o, s) in out.row_mut(v).iter_mut().zip(src) {
                *o += s;
            }
        }
    }
    out
}

/// `f_out(x) = f_in(x)·W0 + (Σ_{q ∈ N(x)} f_in(q))·W1`, bias-free.
///
/// `w0` and `w1` are row-major `in × out` matrices.
pub fn graph_conv<T: Real>(w0: &[T], w1: &[T], out: usize, graph: &NeighborIndex, f: &Mat<T>) -> ModelResult<Mat<T>> {
    if graph.len() != f.rows() {
        return Err(ModelError::Config(format!(
            "graph has {} vertices but features have {} rows",
            graph.len(),
            f.rows()
        )));
    }
    if w0.len() != f.cols() * out || w1.len() != f.cols() * out {
        return Err(ModelError::Config("graph convolution weight shape".into()));
    }
    let mut y = f.matmul(w0, out);
    y.add_assign(&aggregate(graph, f).matmul(w1, out));
    Ok(y)
}

/// Gradients of [`graph_conv`]: accumulates into `dw0`/`dw1` and returns the
/// input-feature gradient.
pub fn graph_conv_backward<T: Real>(
    w0: &[T],
    w1: &[T],
    graph: &NeighborIndex,
    f: &Mat<T>,
    dy: &Mat<T>,
    dw: Option<(&mut [T], &mut [T])>,
) -> Mat<T> {
    let inputs = f.cols();
    if let Some((dw0, dw1)) = dw {
        f.accumulate_outer(dy, dw0);
        aggregate(graph, f).accumulate_outer(dy, dw1);
    }
    let mut df = dy.matmul_transposed(w0, inputs);
    let via_neighbors = dy.matmul_transposed(w1, inputs);
    for v in 0..graph.len() {
        for q in graph.indices(v) {
            for (d, s) in df.row_mut(q).iter_mut().zip(via_neighbors.row(v)) {
                *d += *s;
            }
        }
    }
    df
}

/// Graph convolution layer holding `W0` and `W1` slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphConv {
    pub w0: usize,
    pub w1: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl GraphConv {
    /// Fan-in-scaled weights times `gain`; the neighbor weight is further
    /// divided by the neighbor count `k`, since it multiplies a sum of `k` rows.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        k: usize,
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w0 = store.add_weight(format!("{name}.w0"), inputs, outputs, rng);
        let w1 = store.add_weight(format!("{name}.w1"), inputs, outputs, rng);
        let params = store.params_mut();
        params[w0].value.iter_mut().for_each(|v| *v *= T::lit(gain));
        params[w1].value.iter_mut().for_each(|v| *v *= T::lit(gain / k.max(1) as f64));
        Self { w0, w1, inputs, outputs }
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, graph: &NeighborIndex, f: &Mat<T>) -> ModelResult<Mat<T>> {
        graph_conv(store.get(self.w0), store.get(self.w1), self.outputs, graph, f)
    }

    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        graph: &NeighborIndex,
        f: &Mat<T>,
        dy: &Mat<T>,
        grads: Option<&mut GradStore<T>>,
    ) -> Mat<T> {
        let (w0, w1) = (store.get(self.w0), store.get(self.w1));
        match grads {
            Some(g) => {
                let mut dw0 = vec![T::zero(); w0.len()];
                let mut dw1 = vec![T::zero(); w1.len()];
                let df = graph_conv_backward(w0, w1, graph, f, dy, Some((&mut dw0, &mut dw1)));
                for (a, b) in g.slot_mut(self.w0).iter_mut().zip(dw0) {
                    *a += b;
                }
                for (a, b) in g.slot_mut(self.w1).iter_mut().zip(dw1) {
                    *a += b;
                }
                df
            }
            None => graph_conv_backward(w0, w1, graph, f, dy, None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::finite_difference_check;
    use crate::geometry::{knn_graph, Point};
    use rand::{Rng, SeedableRng};

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
        (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()
    }

    #[test]
    fn chain_graph_by_direct_summation() {
        // vertices on a line at 0, 1 and 2.5: the 1-NN graph is 0→1, 1→0, 2→1
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.5, 0.0, 0.0]];
        let graph = knn_graph(&pts, 1).unwrap();
        let f = Mat::from_vec(3, 1, vec![1.0, 2.0, 3.0]);
        let y = graph_conv(&[1.0], &[1.0], 1, &graph, &f).unwrap();
        // f(x) + Σ_{q ∈ N(x)} f(q)
        let mut want = vec![0.0; 3];
        for (v, w) in want.iter_mut().enumerate() {
            *w = f.row(v)[0] + graph.indices(v).map(|q| f.row(q)[0]).sum::<f64>();
        }
        assert_eq!(y.data(), &want[..]);
        assert_eq!(y.data(), &[3.0, 3.0, 5.0]);
    }

    #[test]
    fn identity_passthrough_and_zero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 10);
        let graph = knn_graph(&pts, 3).unwrap();
        let f = random_mat(&mut rng, 10, 4);
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 5] = 1.0;
        }
        let w1 = random_mat(&mut rng, 4, 4).into_vec();
        assert_eq!(graph_conv(&eye, &[0.0; 16], 4, &graph, &f).unwrap(), f);
        let zero = Mat::zeros(10, 4);
        assert!(graph_conv(&eye, &w1, 4, &graph, &zero).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_in_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 8);
        let graph = knn_graph(&pts, 3).unwrap();
        let (w0, w1) = (random_mat(&mut rng, 3, 2).into_vec(), random_mat(&mut rng, 3, 2).into_vec());
        let f = random_mat(&mut rng, 8, 3);
        let g = random_mat(&mut rng, 8, 3);
        let (a, b) = (0.75, -2.0);
        let mix = Mat::from_vec(8, 3, f.data().iter().zip(g.data()).map(|(x, y)| a * x + b * y).collect());
        let lhs = graph_conv(&w0, &w1, 2, &graph, &mix).unwrap();
        let (yf, yg) = (graph_conv(&w0, &w1, 2, &graph, &f).unwrap(), graph_conv(&w0, &w1, 2, &graph, &g).unwrap());
        for i in 0..16 {
            assert!((lhs.data()[i] - (a * yf.data()[i] + b * yg.data()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn misaligned_graph_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let graph = knn_graph(&random_points(&mut rng, 5), 2).unwrap();
        assert!(graph_conv(&[1.0], &[1.0], 1, &graph, &Mat::zeros(4, 1)).is_err());
    }

    #[test]
    fn gradients_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = random_points(&mut rng, 7);
        let graph = knn_graph(&pts, 3).unwrap();
        let (w0, w1) = (random_mat(&mut rng, 3, 2).into_vec(), random_mat(&mut rng, 3, 2).into_vec());
        let f = random_mat(&mut rng, 7, 3);
        let probe = random_mat(&mut rng, 7, 2);
        let loss = |w0: &[f64], w1: &[f64], f: &Mat<f64>| -> f64 {
            let y = graph_conv(w0, w1, 2, &graph, f).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let mut dw0 = vec![0.0; 6];
        let mut dw1 = vec![0.0; 6];
        let df = graph_conv_backward(&w0, &w1, &graph, &f, &probe, Some((&mut dw0, &mut dw1)));
        let r = finite_difference_check(|x| loss(&w0, &w1, &Mat::from_vec(7, 3, x.to_vec())), f.data(), df.data(), 1e-4);
        assert!(r.passed, "{r:?}");
        let r = finite_difference_check(|x| loss(x, &w1, &f), &w0, &dw0, 1e-4);
        assert!(r.passed, "{r:?}");
        let r = finite_difference_check(|x| loss(&w0, x, &f), &w1, &dw1, 1e-4);
        assert!(r.passed, "{r:?}");
    }
}
