//! Curve-reconstruction methods behind a common trait, looked up by name.
//!
//! Two are built in: `network` (the B-spline functional autoencoder) and
//! `fpca` (linear functional PCA). Each fitted model can score curves,
//! reconstruct them on any grid and serialise itself to a [`ModelFile`],
//! whose `kind` tag names the method that can load it back.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::bspline::{BSplineBasis, CurveSet, EvalMatrix};
use crate::error::{Error, Result};
use crate::io::{ModelFile, NamedArray};
use crate::linear_fpca::{fit_fpca, FpcaModel};
use crate::network::{Activation, Dims, NetworkParams, FIELD_NAMES};
use crate::trainer::{self, EpochRecord, TrainConfig, TrainHistory};

/// Everything a method may need to fit. `train.dims.components` is the
/// number of scores `K` for every method.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub train: TrainConfig,
}

impl FitSettings {
    pub fn components(&self) -> usize {
        self.train.dims.components
    }
}

pub trait FittedModel: Send + Sync {
    fn method(&self) -> &'static str;
    fn basis(&self) -> &BSplineBasis;
    fn components(&self) -> usize;
    /// `n x K` low-dimensional scores.
    fn scores(&self, curves: &CurveSet) -> Result<DMatrix<f64>>;
    /// `n x M` reconstructions on the grid of `eval`.
    fn reconstruct(&self, curves: &CurveSet, eval: &EvalMatrix) -> Result<DMatrix<f64>>;
    fn to_model_file(&self) -> Result<ModelFile>;
    fn history(&self) -> Option<&TrainHistory> {
        None
    }
}

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;

    fn fit_observed(
        &self,
        curves: &CurveSet,
        settings: &FitSettings,
        observer: &mut dyn FnMut(&EpochRecord),
    ) -> Result<Box<dyn FittedModel>>;

    fn fit(&self, curves: &CurveSet, settings: &FitSettings) -> Result<Box<dyn FittedModel>> {
        self.fit_observed(curves, settings, &mut |_| {})
    }

    fn load(&self, file: &ModelFile) -> Result<Box<dyn FittedModel>>;
}

#[derive(Default)]
pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn Method>>,
}

impl MethodRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register(Box::new(NetworkMethod));
        r.register(Box::new(FpcaMethod));
        r
    }

    pub fn register(&mut self, method: Box<dyn Method>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Method> {
        self.methods
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.methods.keys().copied()
    }

    /// Dispatches on the file's `kind` tag.
    pub fn load(&self, file: &ModelFile) -> Result<Box<dyn FittedModel>> {
        self.get(&file.kind)?.load(file)
    }
}

pub struct NetworkMethod;

pub struct NetworkModel {
    pub basis: BSplineBasis,
    pub params: NetworkParams,
    pub seed: u64,
    pub history: Option<TrainHistory>,
}

impl Method for NetworkMethod {
    fn name(&self) -> &'static str {
        "network"
    }

    fn fit_observed(
        &self,
        curves: &CurveSet,
        settings: &FitSettings,
        observer: &mut dyn FnMut(&EpochRecord),
    ) -> Result<Box<dyn FittedModel>> {
        let (params, history) = trainer::train_with_observer(curves, &settings.train, observer)?;
        Ok(Box::new(NetworkModel {
            basis: curves.basis().clone(),
            params,
            seed: settings.train.seed,
            history: Some(history),
        }))
    }

    fn load(&self, file: &ModelFile) -> Result<Box<dyn FittedModel>> {
        let basis = BSplineBasis::from_descriptor(file.basis)?;
        let dims = Dims::new(
            file.dim("basis")?,
            file.dim("hidden")?,
            file.dim("components")?,
            file.dim("decoder")?,
        )?;
        if dims.basis != basis.count() {
            return Err(Error::ModelFile(
                "network L differs from basis count".into(),
            ));
        }
        let activation: Activation = file
            .activation
            .as_deref()
            .ok_or_else(|| Error::ModelFile("network model without activation".into()))?
            .parse()?;
        let mut params = NetworkParams::zeros(dims, activation);
        let shapes = params.shapes();
        for ((name, field), shape) in FIELD_NAMES.iter().zip(params.fields_mut()).zip(shapes) {
            let arr = file.array(name)?;
            if arr.shape != shape {
                return Err(Error::ModelFile(format!(
                    "array `{name}` has shape {:?}, expected {shape:?}",
                    arr.shape
                )));
            }
            field.copy_from_slice(&arr.data);
        }
        Ok(Box::new(NetworkModel {
            basis,
            params,
            seed: file.seed.unwrap_or(0),
            history: None,
        }))
    }
}

impl FittedModel for NetworkModel {
    fn method(&self) -> &'static str {
        "network"
    }

    fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    fn components(&self) -> usize {
        self.params.dims.components
    }

    fn scores(&self, curves: &CurveSet) -> Result<DMatrix<f64>> {
        check_basis(&self.basis, curves)?;
        trainer::encode_all(&self.params, curves.coefficients())
    }

    fn reconstruct(&self, curves: &CurveSet, eval: &EvalMatrix) -> Result<DMatrix<f64>> {
        check_basis(&self.basis, curves)?;
        trainer::reconstruct_all(&self.params, curves.coefficients(), eval)
    }

    fn to_model_file(&self) -> Result<ModelFile> {
        let mut f = ModelFile::new("network", self.basis.descriptor());
        let d = self.params.dims;
        f.dims.insert("basis".into(), d.basis);
        f.dims.insert("hidden".into(), d.hidden);
        f.dims.insert("components".into(), d.components);
        f.dims.insert("decoder".into(), d.decoder);
        f.activation = Some(self.params.activation.name().to_string());
        f.seed = Some(self.seed);
        for ((name, data), shape) in FIELD_NAMES
            .iter()
            .zip(self.params.fields())
            .zip(self.params.shapes())
        {
            f.arrays.push(NamedArray::new(*name, shape, data.to_vec()));
        }
        Ok(f)
    }

    fn history(&self) -> Option<&TrainHistory> {
        self.history.as_ref()
    }
}

pub struct FpcaMethod;

pub struct FpcaFitted(pub FpcaModel);

impl Method for FpcaMethod {
    fn name(&self) -> &'static str {
        "fpca"
    }

    fn fit_observed(
        &self,
        curves: &CurveSet,
        settings: &FitSettings,
        _observer: &mut dyn FnMut(&EpochRecord),
    ) -> Result<Box<dyn FittedModel>> {
        let gram = curves.basis().gram_matrix();
        Ok(Box::new(FpcaFitted(fit_fpca(
            curves,
            &gram,
            settings.components(),
        )?)))
    }

    fn load(&self, file: &ModelFile) -> Result<Box<dyn FittedModel>> {
        let basis = BSplineBasis::from_descriptor(file.basis)?;
        let l = basis.count();
        let k = file.dim("components")?;
        let mean = file.array("mean")?;
        let comps = file.array("components")?;
        let eig = file.array("eigenvalues")?;
        if mean.shape != [l] || comps.shape != [k, l] || eig.shape != [k] {
            return Err(Error::ModelFile(
                "fpca array shapes do not match dims".into(),
            ));
        }
        let components = DMatrix::from_row_slice(k, l, &comps.data);
        Ok(Box::new(FpcaFitted(FpcaModel::from_parts(
            basis,
            mean.data.clone(),
            components,
            eig.data.clone(),
        )?)))
    }
}

impl FittedModel for FpcaFitted {
    fn method(&self) -> &'static str {
        "fpca"
    }

    fn basis(&self) -> &BSplineBasis {
        self.0.basis()
    }

    fn components(&self) -> usize {
        self.0.n_components()
    }

    fn scores(&self, curves: &CurveSet) -> Result<DMatrix<f64>> {
        self.0.scores(curves)
    }

    fn reconstruct(&self, curves: &CurveSet, eval: &EvalMatrix) -> Result<DMatrix<f64>> {
        self.0.reconstruct_curves(curves, eval)
    }

    fn to_model_file(&self) -> Result<ModelFile> {
        let m = &self.0;
        let (k, l) = (m.n_components(), m.basis().count());
        let mut f = ModelFile::new("fpca", m.basis().descriptor());
        f.dims.insert("basis".into(), l);
        f.dims.insert("components".into(), k);
        f.arrays
            .push(NamedArray::new("mean", vec![l], m.mean().to_vec()));
        let rows: Vec<f64> = (0..k)
            .flat_map(|r| m.components().row(r).iter().copied().collect::<Vec<_>>())
            .collect();
        f.arrays
            .push(NamedArray::new("components", vec![k, l], rows));
        f.arrays.push(NamedArray::new(
            "eigenvalues",
            vec![k],
            m.eigenvalues().to_vec(),
        ));
        Ok(f)
    }
}

fn check_basis(basis: &BSplineBasis, curves: &CurveSet) -> Result<()> {
    if curves.basis() != basis {
        return Err(Error::InvalidInput(format!(
            "curves use basis {:?} but the model was fitted with {:?}",
            curves.basis().descriptor(),
            basis.descriptor()
        )));
    }
    Ok(())
}
