use crate::error::{invalid, Error, Result};
use crate::numerics::{Rng, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab == 0 || self.embed == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(invalid(format!("model dimensions must be positive: {self:?}")));
        }
        if self.embed > self.hidden {
            return Err(invalid(format!(
                "embedding size {} exceeds hidden size {}",
                self.embed, self.hidden
            )));
        }
        Ok(())
    }

    /// Input width of layer `l`: the embedding for the first, hidden otherwise.
    pub fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.embed
        } else {
            self.hidden
        }
    }

    /// Output width of layer `l`: the embedding for the last, hidden otherwise.
    pub fn layer_output(&self, l: usize) -> usize {
        if l + 1 == self.layers {
            self.embed
        } else {
            self.hidden
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer<F> {
    /// `input x 4·width`
    pub w_input: Tensor<F>,
    /// `width x 4·width`, the recurrent matrices that receive DropConnect
    pub w_hidden: Tensor<F>,
    /// `4·width`
    pub bias: Tensor<F>,
}

impl<F: Scalar> LstmLayer<F> {
    pub fn width(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    pub fn input_size(&self) -> usize {
        self.w_input.shape()[0]
    }
}

/// All trainable weights. The softmax projection is the embedding matrix
/// itself; there is no separate decoder weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LMParameters<F> {
    pub dims: ModelDims,
    pub embedding: Tensor<F>,
    pub layers: Vec<LstmLayer<F>>,
    pub decoder_bias: Tensor<F>,
}

impl<F: Scalar> LMParameters<F> {
    pub fn zeros(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let layers = (0..dims.layers)
            .map(|l| {
                let (i, w) = (dims.layer_input(l), dims.layer_output(l));
                LstmLayer {
                    w_input: Tensor::zeros(&[i, 4 * w]).into_param(),
                    w_hidden: Tensor::zeros(&[w, 4 * w]).into_param(),
                    bias: Tensor::zeros(&[4 * w]).into_param(),
                }
            })
            .collect();
        Ok(Self {
            dims,
            embedding: Tensor::zeros(&[dims.vocab, dims.embed]).into_param(),
            layers,
            decoder_bias: Tensor::zeros(&[dims.vocab]).into_param(),
        })
    }

    /// The tied output projection.
    pub fn softmax_weight(&self) -> &Tensor<F> {
        &self.embedding
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for l in 0..self.layers.len() {
            names.push(format!("layers.{l}.w_input"));
            names.push(format!("layers.{l}.w_hidden"));
            names.push(format!("layers.{l}.bias"));
        }
        names.push("decoder.bias".to_string());
        names
    }

    /// Every parameter tensor, in the order of [`LMParameters::names`].
    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = vec![&self.embedding];
        for layer in &self.layers {
            out.extend([&layer.w_input, &layer.w_hidden, &layer.bias]);
        }
        out.push(&self.decoder_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = vec![&mut self.embedding];
        for layer in &mut self.layers {
            out.extend([&mut layer.w_input, &mut layer.w_hidden, &mut layer.bias]);
        }
        out.push(&mut self.decoder_bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Copies values in from flat per-tensor arrays (same order as `tensors`).
    pub fn load_values(&mut self, values: &[Vec<F>]) -> Result<()> {
        let mut ts = self.tensors_mut();
        if values.len() != ts.len() {
            return Err(Error::ShapeMismatch {
                op: "load_values",
                lhs: vec![ts.len()],
                rhs: vec![values.len()],
            });
        }
        for (t, v) in ts.iter_mut().zip(values) {
            t.assign(v)?;
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<Vec<F>> {
        self.tensors().iter().map(|t| t.data().to_vec()).collect()
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    pub fn cast<G: Scalar>(&self) -> LMParameters<G> {
        LMParameters {
            dims: self.dims,
            embedding: self.embedding.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    w_input: l.w_input.cast(),
                    w_hidden: l.w_hidden.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
            decoder_bias: self.decoder_bias.cast(),
        }
    }
}

/// Embedding ~ U[-0.1, 0.1]; LSTM weights ~ U[-1/√H, 1/√H]; biases zero.
pub fn init_parameters<F: Scalar>(dims: ModelDims, rng: &mut Rng) -> Result<LMParameters<F>> {
    let mut p = LMParameters::zeros(dims)?;
    let mut fill = |t: &mut Tensor<F>, bound: f64| {
        for x in t.data_mut() {
            *x = F::from_f64_lossy(rng.uniform_range(-bound, bound));
        }
    };
    fill(&mut p.embedding, 0.1);
    let bound = 1.0 / (dims.hidden as f64).sqrt();
    for layer in &mut p.layers {
        fill(&mut layer.w_input, bound);
        fill(&mut layer.w_hidden, bound);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(vocab: usize, embed: usize, hidden: usize, layers: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed,
            hidden,
            layers,
        }
    }

    #[test]
    fn layer_widths() {
        let p = LMParameters::<f32>::zeros(dims(50, 4, 8, 3)).unwrap();
        let shapes: Vec<_> = p.layers.iter().map(|l| (l.input_size(), l.width())).collect();
        assert_eq!(shapes, vec![(4, 8), (8, 8), (8, 4)]);
        let single = LMParameters::<f32>::zeros(dims(50, 4, 8, 1)).unwrap();
        assert_eq!((single.layers[0].input_size(), single.layers[0].width()), (4, 4));
    }

    #[test]
    fn init_bounds() {
        let mut rng = Rng::new(1);
        let p: LMParameters<f64> = init_parameters(dims(300, 40, 1150, 2), &mut rng).unwrap();
        let bound = 1.0 / 1150f64.sqrt();
        assert!((bound - 0.02949).abs() < 1e-5);
        assert!(p.embedding.data().iter().all(|x| x.abs() <= 0.1));
        assert!(p.embedding.data().iter().any(|x| x.abs() > 0.09));
        for l in &p.layers {
            for w in [&l.w_input, &l.w_hidden] {
                assert!(w.data().iter().all(|x| x.abs() <= bound));
            }
            assert!(l.bias.data().iter().all(|&x| x == 0.0));
        }
        assert!(p.decoder_bias.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn seeded_init_is_bit_identical() {
        let d = dims(30, 4, 8, 2);
        let a: LMParameters<f32> = init_parameters(d, &mut Rng::new(99)).unwrap();
        let b: LMParameters<f32> = init_parameters(d, &mut Rng::new(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(LMParameters::<f32>::zeros(dims(0, 4, 8, 2)).is_err());
        assert!(LMParameters::<f32>::zeros(dims(10, 4, 8, 0)).is_err());
        assert!(LMParameters::<f32>::zeros(dims(10, 16, 8, 2)).is_err());
    }

    #[test]
    fn softmax_weight_is_embedding_storage() {
        let p = LMParameters::<f32>::zeros(dims(10, 4, 8, 2)).unwrap();
        assert!(std::ptr::eq(p.softmax_weight(), &p.embedding));
    }

    #[test]
    fn larger_embedding_means_more_parameters() {
        let small = LMParameters::<f32>::zeros(dims(100, 4, 8, 3)).unwrap();
        let full = LMParameters::<f32>::zeros(dims(100, 8, 8, 3)).unwrap();
        assert!(full.param_count() > small.param_count());
        assert_eq!(small.names().len(), small.tensors().len());
    }
}
