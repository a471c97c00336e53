use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::label::LabelCode;
use crate::diffnet::{GradStore, LastLayer, Mat, Mlp, MlpCache, Network, ParamStore, Real};
use crate::error::{ModelError, ModelResult};
use crate::geometry::{interpolation_weights, InterpWeights, Point};
use crate::victim::{matrix_points, SaCache, SetAbstraction};

/// One encoder level. Level `i` (from 0) samples `N / 2^i` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLevel {
    pub radius: f64,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    pub widths: Vec<usize>,
}

fn default_neighbors() -> usize {
    32
}

/// Which decoder layers receive the target code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelConcat {
    /// Every hidden decoder layer.
    Multi,
    /// Only the first decoder layer.
    Single,
}

/// What the final decoder layer emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    /// Adversarial coordinates directly.
    #[default]
    Coordinates,
    /// A per-point displacement added to the input coordinates.
    Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub classes: usize,
    pub levels: Vec<EncoderLevel>,
    /// Width every interpolated level is reduced to before concatenation.
    pub reduce_width: usize,
    /// Hidden decoder widths; a final layer maps to 3 coordinates.
    pub decoder_widths: Vec<usize>,
    pub label_concat: LabelConcat,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub output: OutputMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let level = |radius, widths: &[usize]| EncoderLevel {
            radius,
            neighbors: 32,
            widths: widths.to_vec(),
        };
        Self {
            classes: 4,
            levels: vec![
                level(0.05, &[32, 32, 64]),
                level(0.1, &[64, 64, 128]),
                level(0.2, &[128, 128, 256]),
                level(0.3, &[256, 256, 512]),
            ],
            reduce_width: 64,
            decoder_widths: vec![256, 128, 64],
            label_concat: LabelConcat::Multi,
            normalize: false,
            output: OutputMode::Coordinates,
        }
    }
}

impl GeneratorConfig {
    /// Width of the aggregated per-point feature entering the decoder.
    pub fn aggregate_width(&self) -> usize {
        self.levels.len() * self.reduce_width + 3
    }

    pub fn label_layers(&self) -> usize {
        match self.label_concat {
            LabelConcat::Multi => self.decoder_widths.len(),
            LabelConcat::Single => self.decoder_widths.len().min(1),
        }
    }

    /// Point-count divisor required by the halving cascade.
    pub fn point_divisor(&self) -> usize {
        1 << self.levels.len().saturating_sub(1)
    }
}

/// Per-level sampled subsets and features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T> {
    pub levels: Vec<PyramidLevel<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel<T> {
    /// Indices into the input cloud.
    pub indices: Vec<usize>,
    pub features: Mat<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    levels: Vec<SaCache<T>>,
}

#[derive(Debug, Clone)]
pub struct DecoderCache<T> {
    weights: Vec<Vec<InterpWeights>>,
    source_rows: Vec<usize>,
    reducers: Vec<MlpCache<T>>,
    hidden: Vec<MlpCache<T>>,
    output: MlpCache<T>,
    label_layers: usize,
}

impl<T: Real> DecoderCache<T> {
    /// Width of the interpolated features plus coordinates, before the label code.
    pub fn concat_width(&self) -> usize {
        self.reducers.iter().map(|r| r.output().cols()).sum::<usize>() + 3
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorCache<T> {
    pub encoder: EncoderCache<T>,
    pub decoder: DecoderCache<T>,
}

/// Label-guided generator: point encoder, label encoder and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    config: GeneratorConfig,
    store: ParamStore<T>,
    encoder: Vec<SetAbstraction>,
    reducers: Vec<Mlp>,
    hidden: Vec<Mlp>,
    output: Mlp,
}

fn interpolate<T: Real>(weights: &[InterpWeights], features: &Mat<T>) -> Mat<T> {
    let mut out = Mat::zeros(weights.len(), features.cols());
    for (q, w) in weights.iter().enumerate() {
        let row = out.row_mut(q);
        for &(j, wj) in &w.terms {
            let wj = T::lit(wj);
            for (o, f) in row.iter_mut().zip(features.row(j)) {
                *o += wj * *f;
            }
        }
    }
    out
}

fn interpolate_backward<T: Real>(weights: &[InterpWeights], dy: &Mat<T>, sources: usize) -> Mat<T> {
    let mut out = Mat::zeros(sources, dy.cols());
    for (q, w) in weights.iter().enumerate() {
        for &(j, wj) in &w.terms {
            let wj = T::lit(wj);
            for (o, d) in out.row_mut(j).iter_mut().zip(dy.row(q)) {
                *o += wj * *d;
            }
        }
    }
    out
}

impl<T: Real> Generator<T> {
    pub fn new(config: GeneratorConfig, seed: u64) -> ModelResult<Self> {
        if config.classes < 2 || config.levels.is_empty() || config.reduce_width == 0 {
            return Err(ModelError::Config("generator needs ≥2 classes, ≥1 level and a reduce width".into()));
        }
        for (i, l) in config.levels.iter().enumerate() {
            if !(l.radius > 0.0) || l.neighbors == 0 || l.widths.is_empty() {
                return Err(ModelError::Config(format!("invalid encoder level {i}")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut encoder = Vec::new();
        let mut feature_width = 0;
        for (i, l) in config.levels.iter().enumerate() {
            let sa = SetAbstraction::new(
                &mut store,
                &format!("encoder.{i}"),
                feature_width,
                l.radius,
                l.neighbors,
                &l.widths,
                config.normalize,
                &mut rng,
            );
            feature_width = sa.out_width();
            encoder.push(sa);
        }
        let reducers = encoder
            .iter()
            .enumerate()
            .map(|(i, sa)| {
                Mlp::new(
                    &mut store,
                    &format!("reduce.{i}"),
                    &[sa.out_width(), config.reduce_width],
                    LastLayer::Relu,
                    config.normalize,
                    &mut rng,
                )
            })
            .collect();
        let label_layers = config.label_layers();
        let mut width = config.aggregate_width();
        let mut hidden = Vec::new();
        for (j, &w) in config.decoder_widths.iter().enumerate() {
            let input = width + if j < label_layers { config.classes } else { 0 };
            hidden.push(Mlp::new(&mut store, &format!("decoder.{j}"), &[input, w], LastLayer::Relu, config.normalize, &mut rng));
            width = w;
        }
        let output = Mlp::new(&mut store, "decoder.out", &[width, 3], LastLayer::Linear, false, &mut rng);
        if config.output == OutputMode::Offset {
            // a zero displacement head makes the untrained generator the identity
            for p in store.params_mut().iter_mut().filter(|p| p.name.starts_with("decoder.out.")) {
                p.value.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        Ok(Self {
            config,
            store,
            encoder,
            reducers,
            hidden,
            output,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn label_code(&self, target: usize) -> ModelResult<LabelCode> {
        LabelCode::new(target, self.config.classes, self.config.label_layers())
    }

    /// Hierarchical point features at `N, N/2, N/4, ...` points.
    pub fn encode_points(&self, xyz: &Mat<T>) -> ModelResult<(FeaturePyramid<T>, EncoderCache<T>)> {
        let n = xyz.rows();
        let div = self.config.point_divisor();
        if n == 0 || n % div != 0 {
            return Err(ModelError::Config(format!("point count {n} is not a positive multiple of {div}")));
        }
        let coords = matrix_points(xyz);
        let mut idx: Vec<usize> = (0..n).collect();
        let mut feats: Option<Mat<T>> = None;
        let mut levels = Vec::new();
        let mut caches = Vec::new();
        for (i, sa) in self.encoder.iter().enumerate() {
            let local_coords: Vec<Point> = idx.iter().map(|&j| coords[j]).collect();
            let local = xyz.gather_rows(&idx);
            let (out, cache) = sa.forward(&self.store, &local_coords, &local, feats.as_ref(), n >> i)?;
            idx = cache.sampled.iter().map(|&s| idx[s]).collect();
            levels.push(PyramidLevel {
                indices: idx.clone(),
                features: out.clone(),
            });
            caches.push(cache);
            feats = Some(out);
        }
        Ok((FeaturePyramid { levels }, EncoderCache { levels: caches }))
    }

    /// Interpolates every level back to all points, concatenates with the
    /// coordinates and runs the label-concatenating decoder.
    pub fn decode_points(&self, pyramid: &FeaturePyramid<T>, code: &LabelCode, xyz: &Mat<T>) -> ModelResult<(Mat<T>, DecoderCache<T>)> {
        if pyramid.levels.len() != self.reducers.len() {
            return Err(ModelError::Config(format!(
                "pyramid has {} levels, decoder expects {}",
                pyramid.levels.len(),
                self.reducers.len()
            )));
        }
        if code.classes() != self.config.classes || code.layers() != self.config.label_layers() {
            return Err(ModelError::Config("label code does not match the generator".into()));
        }
        let coords = matrix_points(xyz);
        let n = xyz.rows();
        let mut weights = Vec::new();
        let mut source_rows = Vec::new();
        let mut reducers = Vec::new();
        for (level, reducer) in pyramid.levels.iter().zip(&self.reducers) {
            let source: Vec<Point> = level.indices.iter().map(|&i| coords[i]).collect();
            let w = interpolation_weights(&coords, &source)?;
            let up = interpolate(&w, &level.features);
            reducers.push(reducer.forward_cached(&self.store, up)?);
            weights.push(w);
            source_rows.push(level.indices.len());
        }
        let mut parts: Vec<&Mat<T>> = reducers.iter().map(MlpCache::output).collect();
        parts.push(xyz);
        let mut h = Mat::hcat(&parts);
        let z = code.broadcast::<T>(n);
        let mut hidden = Vec::new();
        for (j, layer) in self.hidden.iter().enumerate() {
            let input = if j < code.layers() { Mat::hcat(&[&h, &z]) } else { h };
            let c = layer.forward_cached(&self.store, input)?;
            h = c.output().clone();
            hidden.push(c);
        }
        let output = self.output.forward_cached(&self.store, h)?;
        let mut points = output.output().clone();
        if self.config.output == OutputMode::Offset {
            points.add_assign(xyz);
        }
        Ok((
            points,
            DecoderCache {
                weights,
                source_rows,
                reducers,
                hidden,
                output,
                label_layers: code.layers(),
            },
        ))
    }

    /// `P_adv = D_p(E_l(t), E_p(P))`.
    pub fn forward(&self, xyz: &Mat<T>, target: usize) -> ModelResult<(Mat<T>, GeneratorCache<T>)> {
        let code = self.label_code(target)?;
        let (pyramid, encoder) = self.encode_points(xyz)?;
        let (out, decoder) = self.decode_points(&pyramid, &code, xyz)?;
        Ok((out, GeneratorCache { encoder, decoder }))
    }

    pub fn generate(&self, xyz: &Mat<T>, target: usize) -> ModelResult<Mat<T>> {
        Ok(self.forward(xyz, target)?.0)
    }

    /// Accumulates parameter gradients for an output-coordinate gradient.
    pub fn backward(&self, cache: &GeneratorCache<T>, dout: &Mat<T>, grads: &mut GradStore<T>) {
        let dc = &cache.decoder;
        let mut d = self
            .output
            .backward(&self.store, &dc.output, dout.clone(), Some(grads), true)
            .expect("input grad");
        for j in (0..self.hidden.len()).rev() {
            let prev = self.hidden[j].inputs() - if j < dc.label_layers { self.config.classes } else { 0 };
            let din = self.hidden[j]
                .backward(&self.store, &dc.hidden[j], d, Some(grads), true)
                .expect("input grad");
            d = if j < dc.label_layers { din.columns(0, prev) } else { din };
        }
        let rw = self.config.reduce_width;
        let levels = self.encoder.len();
        let mut from_decoder = Vec::with_capacity(levels);
        for i in 0..levels {
            let dr = d.columns(i * rw, rw);
            let dup = self.reducers[i]
                .backward(&self.store, &dc.reducers[i], dr, Some(grads), true)
                .expect("input grad");
            from_decoder.push(interpolate_backward(&dc.weights[i], &dup, dc.source_rows[i]));
        }
        let mut carried: Option<Mat<T>> = None;
        for i in (0..levels).rev() {
            let mut dfeat = from_decoder[i].clone();
            if let Some(c) = carried.take() {
                dfeat.add_assign(&c);
            }
            let (_, dprev) = self.encoder[i].backward(&self.store, &cache.encoder.levels[i], &dfeat, Some(grads), false, i > 0);
            carried = dprev;
        }
    }
}

impl<T: Real> Network<T> for Generator<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }
}
