//! Fitted-model document format.
//!
//! A model is one JSON text document: label, training size, components
//! (weight, mean, row-major covariance), log-likelihood, BIC, and an echo
//! of the fit configuration. Values survive a write/read cycle bit-exactly.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EmConfig, GaussianComponent, GmmModel};

#[derive(Serialize, Deserialize)]
struct ComponentDocument {
    weight: f64,
    mean: [f64; 3],
    cov: [f64; 9],
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    label: String,
    n_train: usize,
    components: Vec<ComponentDocument>,
    log_likelihood: f64,
    bic: f64,
    config_echo: EmConfig,
    iterations: usize,
    converged: bool,
}

fn component_to_doc(component: &GaussianComponent) -> ComponentDocument {
    let mut cov = [0.0; 9];
    for row in 0..3 {
        for col in 0..3 {
            cov[row * 3 + col] = component.covariance[(row, col)];
        }
    }
    ComponentDocument {
        weight: component.weight,
        mean: [component.mean.x, component.mean.y, component.mean.z],
        cov,
    }
}

fn component_from_doc(doc: &ComponentDocument) -> GaussianComponent {
    let mut covariance = Matrix3::zeros();
    for row in 0..3 {
        for col in 0..3 {
            covariance[(row, col)] = doc.cov[row * 3 + col];
        }
    }
    GaussianComponent {
        weight: doc.weight,
        mean: Vector3::from(doc.mean),
        covariance,
    }
}

pub fn model_to_json(label: &str, model: &GmmModel) -> Result<String> {
    let doc = ModelDocument {
        label: label.to_string(),
        n_train: model.n_train,
        components: model.components.iter().map(component_to_doc).collect(),
        log_likelihood: model.log_likelihood,
        bic: model.bic,
        config_echo: model.config.clone(),
        iterations: model.iterations,
        converged: model.converged,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn model_from_json(text: &str) -> Result<(String, GmmModel)> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    let model = GmmModel {
        components: doc.components.iter().map(component_from_doc).collect(),
        log_likelihood: doc.log_likelihood,
        bic: doc.bic,
        n_train: doc.n_train,
        iterations: doc.iterations,
        converged: doc.converged,
        config: doc.config_echo,
    };
    model.validate()?;
    Ok((doc.label, model))
}

pub fn write_model_file(path: &Path, label: &str, model: &GmmModel) -> Result<()> {
    fs::write(path, model_to_json(label, model)?)?;
    Ok(())
}

pub fn read_model_file(path: &Path) -> Result<(String, GmmModel)> {
    let text = fs::read_to_string(path).map_err(|e| Error::MalformedFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    model_from_json(&text).map_err(|e| Error::MalformedFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
