//! In-browser playground for the similarity-evidence classifiers.
//!
//! A [`Demo`] holds a small 2-D multi-class dataset in [-1, 1]^2 that the
//! page can add points to, and answers three questions about it: which class
//! each pixel of a grid would get, how strong one class's evidence is across
//! the plane, and what the SparseSBLR coefficient matrix looks like.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;

use simbase::dataset::{normalize_features, Dataset, LabelSet, Task};
use simbase::models::{Hyper, MethodKind, ModelBody, TrainedModel};
use simbase::optim::SolverConfig;
use simbase::similarity::{EvidenceTransform, KernelConfig};

pub const CLASSES: usize = 3;

#[wasm_bindgen]
pub struct Demo {
    points: Vec<[f64; 2]>,
    classes: Vec<u8>,
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Three overlapping blobs, `per_class` points each.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, per_class: usize) -> Demo {
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
        let centres = [[-0.5, -0.4], [0.5, -0.4], [0.0, 0.5]];
        let mut demo = Demo {
            points: Vec::new(),
            classes: Vec::new(),
        };
        for i in 0..CLASSES * per_class {
            let c = i % CLASSES;
            let jitter = |rng: &mut ChaCha8Rng| 0.28 * rng.sample::<f64, _>(StandardNormal);
            let p = [centres[c][0] + jitter(&mut rng), centres[c][1] + jitter(&mut rng)];
            demo.points.push(p.map(|v| v.clamp(-1.0, 1.0)));
            demo.classes.push(c as u8);
        }
        demo
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Interleaved x, y coordinates.
    pub fn points(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn classes(&self) -> Vec<u8> {
        self.classes.clone()
    }

    pub fn add_point(&mut self, x: f64, y: f64, class: u8) -> Result<(), JsError> {
        if usize::from(class) >= CLASSES {
            return Err(js_err(format!("class must be below {CLASSES}")));
        }
        self.points.push([x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0)]);
        self.classes.push(class);
        Ok(())
    }

    /// Drops the most recently added point.
    pub fn undo(&mut self) {
        self.points.pop();
        self.classes.pop();
    }

    /// Predicted class for every cell of a `resolution` x `resolution` grid
    /// over [-1, 1]^2, row-major from the top-left corner.
    pub fn decision_map(&self, method: &str, gamma: f64, lambda: f64, resolution: usize) -> Result<Vec<u8>, JsError> {
        let kind: MethodKind = method.parse().map_err(js_err)?;
        let model = self.fit(kind, gamma, lambda)?;
        let pred = model.predict_raw(grid(resolution).view()).map_err(js_err)?;
        Ok(pred.labels.iter().map(|s| s[0] as u8).collect())
    }

    /// Fraction of the current points the model classifies correctly.
    pub fn training_accuracy(&self, method: &str, gamma: f64, lambda: f64) -> Result<f64, JsError> {
        let kind: MethodKind = method.parse().map_err(js_err)?;
        let model = self.fit(kind, gamma, lambda)?;
        let d = self.dataset()?;
        let pred = model.predict_raw(d.features().view()).map_err(js_err)?;
        let hits = pred.labels.iter().zip(d.labels()).filter(|(p, t)| p == t).count();
        Ok(hits as f64 / d.n_instances() as f64)
    }

    /// Normalized evidence for `class` over the grid, each in [0, 1]. Features
    /// are scaled exactly as the fitted models scale them.
    pub fn evidence_field(&self, class: usize, gamma: f64, resolution: usize) -> Result<Vec<f64>, JsError> {
        if class >= CLASSES {
            return Err(js_err(format!("class must be below {CLASSES}")));
        }
        let (d, norm) = normalize_features(&self.dataset()?);
        let kernel = KernelConfig::rbf(gamma).map_err(js_err)?;
        let t = EvidenceTransform::fit(d.features().view(), d.labels(), CLASSES, kernel).map_err(js_err)?;
        let cells = norm.apply(grid(resolution).view()).map_err(js_err)?;
        let ev = t.evidence_matrix(cells.view(), true).map_err(js_err)?;
        Ok(ev.column(class).to_vec())
    }

    /// SparseSBLR coefficients, `CLASSES` rows of (intercept, weight per
    /// class evidence), row-major.
    pub fn coefficients(&self, gamma: f64, lambda: f64) -> Result<Vec<f64>, JsError> {
        let model = self.fit(MethodKind::SparseSblr, gamma, lambda)?;
        match &model.body {
            ModelBody::SparseSblr(m) => Ok(m.coefficients().betas.iter().copied().collect()),
            _ => unreachable!("fit with SparseSblr"),
        }
    }
}

impl Demo {
    fn dataset(&self) -> Result<Dataset, JsError> {
        let x = Array2::from_shape_fn((self.points.len(), 2), |(i, j)| self.points[i][j]);
        let labels: Vec<LabelSet> = self.classes.iter().map(|&c| vec![usize::from(c)]).collect();
        Dataset::new(
            x,
            labels,
            (0..CLASSES).map(|c| format!("class {c}")).collect(),
            vec!["x".into(), "y".into()],
            Task::Mcc,
        )
        .map_err(js_err)
    }

    fn fit(&self, kind: MethodKind, gamma: f64, lambda: f64) -> Result<TrainedModel, JsError> {
        let hyper = Hyper {
            gamma,
            lambda,
            ..Hyper::default()
        };
        TrainedModel::fit(kind, &self.dataset()?, hyper, &SolverConfig::default()).map_err(js_err)
    }
}

/// Cell centres of a square grid over [-1, 1]^2, top row first.
pub fn grid(resolution: usize) -> Array2<f64> {
    let step = 2.0 / resolution as f64;
    let centre = |i: usize| -1.0 + step * (i as f64 + 0.5);
    let mut g = Array2::zeros((resolution * resolution, 2));
    for r in 0..resolution {
        for c in 0..resolution {
            g.row_mut(r * resolution + c)
                .assign(&Array1::from(vec![centre(c), -centre(r)]));
        }
    }
    g
}
