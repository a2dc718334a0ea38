use crate::error::{invalid, Result};
use crate::numerics::{sample_bernoulli_mask, Rng, Scalar, Tensor};

use super::{LMParameters, ModelDims};

/// Drop probabilities for the five dropout sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutRates {
    /// on the word vectors entering the first layer
    pub input: f64,
    /// on the outputs between stacked layers
    pub hidden: f64,
    /// on the final layer's output before the softmax
    pub output: f64,
    /// whole-word dropout on embedding rows
    pub embedding: f64,
    /// DropConnect on the recurrent matrices
    pub weight: f64,
}

impl DropoutRates {
    pub const NONE: Self = Self {
        input: 0.0,
        hidden: 0.0,
        output: 0.0,
        embedding: 0.0,
        weight: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("input", self.input),
            ("hidden", self.hidden),
            ("output", self.output),
            ("embedding", self.embedding),
            ("weight", self.weight),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(invalid(format!("{name} dropout must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }
}

/// Dropout masks for one forward/backward pass. Each mask is sampled once and
/// applied at every timestep; `None` means the site is inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet<F> {
    /// one scale per vocabulary row
    pub embedding: Option<Vec<F>>,
    /// `batch x embed`
    pub input: Option<Tensor<F>>,
    /// one per boundary between layers, `batch x width`
    pub hidden: Vec<Option<Tensor<F>>>,
    /// `batch x embed`
    pub output: Option<Tensor<F>>,
    /// one per layer, shaped like that layer's recurrent matrix
    pub weight: Vec<Option<Tensor<F>>>,
}

fn site<F: Scalar>(rng: &mut Rng, shape: &[usize], drop: f64) -> Result<Option<Tensor<F>>> {
    if drop == 0.0 {
        Ok(None)
    } else {
        sample_bernoulli_mask(rng, shape, 1.0 - drop).map(Some)
    }
}

impl<F: Scalar> MaskSet<F> {
    /// No dropout anywhere; used for evaluation.
    pub fn none(layers: usize) -> Self {
        Self {
            embedding: None,
            input: None,
            hidden: vec![None; layers.saturating_sub(1)],
            output: None,
            weight: vec![None; layers],
        }
    }

    pub fn sample(dims: ModelDims, rates: &DropoutRates, batch: usize, rng: &mut Rng) -> Result<Self> {
        rates.validate()?;
        let embedding = site::<F>(rng, &[dims.vocab], rates.embedding)?.map(|t| t.data().to_vec());
        let input = site(rng, &[batch, dims.embed], rates.input)?;
        let hidden = (0..dims.layers - 1)
            .map(|l| site(rng, &[batch, dims.layer_output(l)], rates.hidden))
            .collect::<Result<_>>()?;
        let output = site(rng, &[batch, dims.embed], rates.output)?;
        let weight = (0..dims.layers)
            .map(|l| {
                let w = dims.layer_output(l);
                site(rng, &[w, 4 * w], rates.weight)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            embedding,
            input,
            hidden,
            output,
            weight,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.embedding.is_none()
            && self.input.is_none()
            && self.output.is_none()
            && self.hidden.iter().all(Option::is_none)
            && self.weight.iter().all(Option::is_none)
    }
}

/// Effective recurrent matrices `mask ⊙ U / (1 - p)` for one pass. The stored
/// parameters are not modified.
pub fn apply_weight_drop<F: Scalar>(params: &LMParameters<F>, p_wd: f64, rng: &mut Rng) -> Result<Vec<Tensor<F>>> {
    if !(0.0..1.0).contains(&p_wd) {
        return Err(invalid(format!("weight drop must be in [0, 1), got {p_wd}")));
    }
    params
        .layers
        .iter()
        .map(|layer| {
            let u = &layer.w_hidden;
            if p_wd == 0.0 {
                return Tensor::new(u.shape().to_vec(), u.data().to_vec());
            }
            let mask: Tensor<F> = sample_bernoulli_mask(rng, u.shape(), 1.0 - p_wd)?;
            let data = u.data().iter().zip(mask.data()).map(|(&w, &m)| w * m).collect();
            Tensor::new(u.shape().to_vec(), data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_parameters;

    fn dims() -> ModelDims {
        ModelDims {
            vocab: 20,
            embed: 4,
            hidden: 6,
            layers: 3,
        }
    }

    #[test]
    fn zero_weight_drop_is_identity() {
        let mut rng = Rng::new(1);
        let p: LMParameters<f64> = init_parameters(dims(), &mut rng).unwrap();
        let eff = apply_weight_drop(&p, 0.0, &mut rng).unwrap();
        for (e, l) in eff.iter().zip(&p.layers) {
            assert_eq!(e.data(), l.w_hidden.data());
        }
    }

    #[test]
    fn half_weight_drop_zeroes_or_doubles() {
        let mut rng = Rng::new(2);
        let p: LMParameters<f64> = init_parameters(dims(), &mut rng).unwrap();
        let before = p.clone();
        let eff = apply_weight_drop(&p, 0.5, &mut rng).unwrap();
        let mut dropped = 0;
        for (e, l) in eff.iter().zip(&p.layers) {
            for (&x, &w) in e.data().iter().zip(l.w_hidden.data()) {
                assert!(x == 0.0 || x == 2.0 * w);
                dropped += (x == 0.0) as usize;
            }
        }
        assert!(dropped > 0);
        assert_eq!(p, before);
    }

    #[test]
    fn weight_drop_rejects_one() {
        let mut rng = Rng::new(2);
        let p = LMParameters::<f64>::zeros(dims()).unwrap();
        assert!(apply_weight_drop(&p, 1.0, &mut rng).is_err());
    }

    #[test]
    fn mask_shapes() {
        let rates = DropoutRates {
            input: 0.4,
            hidden: 0.3,
            output: 0.4,
            embedding: 0.1,
            weight: 0.5,
        };
        let m: MaskSet<f32> = MaskSet::sample(dims(), &rates, 5, &mut Rng::new(3)).unwrap();
        assert_eq!(m.embedding.as_ref().unwrap().len(), 20);
        assert_eq!(m.input.as_ref().unwrap().shape(), &[5, 4]);
        let hs: Vec<_> = m.hidden.iter().map(|h| h.as_ref().unwrap().shape().to_vec()).collect();
        assert_eq!(hs, vec![vec![5, 6], vec![5, 6]]);
        assert_eq!(m.output.as_ref().unwrap().shape(), &[5, 4]);
        let ws: Vec<_> = m.weight.iter().map(|w| w.as_ref().unwrap().shape().to_vec()).collect();
        assert_eq!(ws, vec![vec![6, 24], vec![6, 24], vec![4, 16]]);
    }

    #[test]
    fn rows_get_distinct_masks() {
        let rates = DropoutRates {
            input: 0.5,
            ..DropoutRates::NONE
        };
        let d = ModelDims { embed: 64, hidden: 64, ..dims() };
        let m: MaskSet<f64> = MaskSet::sample(d, &rates, 4, &mut Rng::new(3)).unwrap();
        let input = m.input.unwrap();
        let rows: Vec<&[f64]> = input.data().chunks(64).collect();
        assert!(rows.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn inactive_sites_draw_nothing() {
        let mut rng = Rng::new(3);
        let m: MaskSet<f32> = MaskSet::sample(dims(), &DropoutRates::NONE, 2, &mut rng).unwrap();
        assert!(m.is_empty());
        assert_eq!(rng.mask_draws(), 0);
    }
}
