use serde::{Deserialize, Serialize};

use super::{Activation, FeatureError};

/// `G = F Fᵀ` for one tapped layer, `F` being the activation as `C × M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub layer: String,
    pub c: usize,
    /// Spatial size `H·W`.
    pub m: usize,
    /// Row-major `C × C`.
    pub data: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.c + j]
    }

    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.c {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

pub fn gram(layer: &str, act: &Activation) -> GramMatrix {
    let f = act.as_matrix();
    let g = f.dot(&f.t());
    GramMatrix {
        layer: layer.to_string(),
        c: act.c,
        m: act.h * act.w,
        data: g.iter().copied().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Per-tap style weights; `None` means uniform `1/L`.
    pub style: Option<Vec<f64>>,
    pub content: f64,
    pub reg: f64,
    /// Tap used by the content term; `None` picks the deepest tap.
    pub content_tap: Option<String>,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            style: None,
            content: 0.0,
            reg: 1e-4,
            content_tap: None,
        }
    }
}

impl LossWeights {
    pub fn style_weights(&self, taps: usize) -> Vec<f64> {
        match &self.style {
            Some(w) => w.clone(),
            None => vec![1.0 / taps as f64; taps],
        }
    }

    pub fn validate(&self, taps: usize) -> Result<(), FeatureError> {
        let w = self.style_weights(taps);
        if w.len() != taps {
            return Err(FeatureError::Tap(format!("{} style weights for {taps} taps", w.len())));
        }
        if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) || !w.iter().any(|&v| v > 0.0) {
            return Err(FeatureError::Spec("style weights must be non-negative with at least one positive".into()));
        }
        if !(self.content >= 0.0 && self.content.is_finite()) || !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(FeatureError::Spec("content and reg weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Weighted Gram-matching loss and its gradient with respect to each tap.
pub fn style_loss(
    gen: &[Activation],
    style: &[GramMatrix],
    weights: &[f64],
) -> Result<(f64, Vec<Activation>), FeatureError> {
    if gen.len() != style.len() || gen.len() != weights.len() {
        return Err(FeatureError::Tap(format!(
            "{} generated taps, {} style grams, {} weights",
            gen.len(),
            style.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(gen.len());
    for ((act, s), &w) in gen.iter().zip(style).zip(weights) {
        if act.c != s.c {
            return Err(FeatureError::Tap(format!(
                "layer {}: {} channels generated, {} in style",
                s.layer, act.c, s.c
            )));
        }
        let g = gram(&s.layer, act);
        let (c, m) = (act.c as f64, (act.h * act.w) as f64);
        let norm = c * c * m * m;
        let diff: Vec<f64> = g.data.iter().zip(&s.data).map(|(a, b)| a - b).collect();
        total += w * diff.iter().map(|d| d * d).sum::<f64>() / (4.0 * norm);

        let d = ndarray::ArrayView2::from_shape((act.c, act.c), &diff).expect("square");
        let df = d.dot(&act.as_matrix());
        let scale = w / norm;
        grads.push(Activation::from_data(
            act.c,
            act.h,
            act.w,
            df.iter().map(|v| v * scale).collect(),
        ));
    }
    Ok((total, grads))
}

/// `(α/2) Σ (F_gen − F_content)²` and its gradient.
pub fn content_loss(gen: &Activation, content: &Activation, alpha: f64) -> Result<(f64, Activation), FeatureError> {
    if !gen.same_shape(content) {
        return Err(FeatureError::Shape {
            layer: "content".into(),
            message: format!(
                "{}x{}x{} vs {}x{}x{}",
                gen.c, gen.h, gen.w, content.c, content.h, content.w
            ),
        });
    }
    if alpha == 0.0 {
        return Ok((0.0, Activation::zeros(gen.c, gen.h, gen.w)));
    }
    let diff: Vec<f64> = gen.data.iter().zip(&content.data).map(|(a, b)| a - b).collect();
    let loss = 0.5 * alpha * diff.iter().map(|d| d * d).sum::<f64>();
    Ok((
        loss,
        Activation::from_data(gen.c, gen.h, gen.w, diff.iter().map(|d| alpha * d).collect()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Activation {
        Activation::from_data(1, 1, 1, vec![v])
    }

    #[test]
    fn orthonormal_rows() {
        let a = Activation::from_data(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(gram("x", &a).data, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn scalar_hand_case() {
        let s = gram("x", &scalar(1.0));
        let (e, g) = style_loss(&[scalar(2.0)], &[s], &[1.0]).unwrap();
        assert_eq!(e, 2.25);
        assert_eq!(g[0].data, vec![6.0]);
    }

    #[test]
    fn perfect_match_is_zero() {
        let a = Activation::from_data(2, 2, 2, vec![0.1, 0.4, -0.2, 1.0, 0.3, 0.0, 0.7, 0.2]);
        let (e, g) = style_loss(&[a.clone()], &[gram("x", &a)], &[1.0]).unwrap();
        assert_eq!(e, 0.0);
        assert!(g[0].data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_is_linear() {
        let s = gram("x", &scalar(1.0));
        let (e1, _) = style_loss(&[scalar(2.0)], &[s.clone()], &[0.3]).unwrap();
        let (e2, _) = style_loss(&[scalar(2.0)], &[s], &[0.6]).unwrap();
        assert_eq!(e2, 2.0 * e1);
    }

    #[test]
    fn tap_mismatch() {
        let s = gram("x", &scalar(1.0));
        assert!(matches!(style_loss(&[], &[s.clone()], &[1.0]), Err(FeatureError::Tap(_))));
        let two = Activation::zeros(2, 1, 1);
        assert!(matches!(style_loss(&[two], &[s], &[1.0]), Err(FeatureError::Tap(_))));
    }

    #[test]
    fn content_cases() {
        assert_eq!(content_loss(&scalar(3.0), &scalar(1.0), 1.0).unwrap(), (2.0, scalar(2.0)));
        assert_eq!(content_loss(&scalar(3.0), &scalar(1.0), 0.0).unwrap(), (0.0, scalar(0.0)));
        assert_eq!(content_loss(&scalar(3.0), &scalar(3.0), 1.0).unwrap().0, 0.0);
        assert!(matches!(
            content_loss(&scalar(1.0), &Activation::zeros(2, 1, 1), 1.0),
            Err(FeatureError::Shape { .. })
        ));
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!(w.style_weights(4), vec![0.25; 4]);
        assert!(w.validate(4).is_ok());
        let bad = LossWeights {
            style: Some(vec![0.0, 0.0]),
            ..w
        };
        assert!(bad.validate(2).is_err());
    }
}
