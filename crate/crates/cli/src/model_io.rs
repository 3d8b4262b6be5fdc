//! Loading saved models of any kind behind one prediction surface.

use dndt_core::cart::CartModel;
use dndt_core::data::FeatureRange;
use dndt_core::forest::ForestModel;
use dndt_core::model::{DndtModel, ModelFile, ModelPayload};
use dndt_core::{Error, Result};
use std::path::Path;

pub enum LoadedModel {
    Tree(DndtModel),
    Forest(ForestModel),
    Cart(CartModel),
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<LoadedModel> {
        let text = std::fs::read_to_string(path)?;
        let file = ModelFile::from_json(&text)?;
        Ok(match file.payload {
            ModelPayload::Tree(doc) => LoadedModel::Tree(DndtModel::from_doc(&doc)?),
            ModelPayload::Forest(doc) => LoadedModel::Forest(ForestModel::from_doc(&doc)?),
            ModelPayload::Cart(model) => LoadedModel::Cart(model),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LoadedModel::Tree(_) => "tree",
            LoadedModel::Forest(_) => "forest",
            LoadedModel::Cart(_) => "cart",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            LoadedModel::Tree(m) => m.n_features(),
            LoadedModel::Forest(m) => m.n_features(),
            LoadedModel::Cart(m) => m.feature_names.len(),
        }
    }

    pub fn class_names(&self) -> &[String] {
        match self {
            LoadedModel::Tree(m) => m.class_names(),
            LoadedModel::Forest(m) => m.class_names(),
            LoadedModel::Cart(m) => &m.class_names,
        }
    }

    /// Normalization ranges recorded at training time. A hand-assembled CART
    /// file may omit them; evaluating such a model needs them, so that is an
    /// error here.
    pub fn feature_ranges(&self) -> Result<&[FeatureRange]> {
        match self {
            LoadedModel::Tree(m) => Ok(m.feature_ranges()),
            LoadedModel::Forest(m) => Ok(m.feature_ranges()),
            LoadedModel::Cart(m) => m.feature_ranges.as_deref().ok_or_else(|| {
                Error::ModelFormat(
                    "cart model carries no normalization ranges; cannot map raw inputs".into(),
                )
            }),
        }
    }

    /// Hard prediction on a normalized full-width row.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            LoadedModel::Tree(m) => m.predict_class(x),
            LoadedModel::Forest(m) => m.predict_majority(x),
            LoadedModel::Cart(m) => Ok(m.predict(x)),
        }
    }
}
