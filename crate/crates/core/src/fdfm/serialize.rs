use nalgebra::DMatrix;

use super::{FdfmError, FdfmModel, InnerProduct};
use crate::artime::{ArProcess, RegressorPanel};
use crate::doc::{DocError, KeyedDocument};
use crate::spline::{KnotGrid, NaturalCubicSpline};

const FORMAT: &str = "fdfm-model-1";

impl From<DocError> for FdfmError {
    fn from(e: DocError) -> Self {
        FdfmError::Document(e.to_string())
    }
}

pub fn model_to_string(model: &FdfmModel) -> String {
    let mut doc = KeyedDocument::new();
    doc.push_str("format", FORMAT);
    doc.push_display("factors", model.k());
    doc.push_display("ar_order", model.ar_order());
    doc.push_floats("knots", model.grid.knots());
    doc.push_float("sigma2", model.sigma2);
    doc.push_floats("lambdas", &model.lambdas);
    doc.push_str(
        "inner_product",
        match model.inner_product {
            InnerProduct::Discrete => "discrete",
            InnerProduct::Quadrature => "quadrature",
        },
    );
    doc.push_display("converged", model.converged);
    doc.push_display("iterations", model.iterations);
    doc.push_floats("fit_trace", &model.fit_trace);
    for (k, (spline, proc)) in model.loadings.iter().zip(&model.factors).enumerate() {
        doc.push_floats(&format!("loading.{k}.values"), spline.values());
        doc.push_floats(&format!("loading.{k}.second_derivatives"), spline.second_derivatives());
        doc.push_floats(&format!("factor.{k}.coefficients"), &proc.coefficients);
        doc.push_float(&format!("factor.{k}.intercept"), proc.intercept);
        doc.push_float(&format!("factor.{k}.innovation_variance"), proc.innovation_variance);
        if let Some(mu) = &proc.regressor_coefficients {
            doc.push_floats(&format!("factor.{k}.regressor_coefficients"), mu);
        }
    }
    doc.push_display("scores.rows", model.scores.nrows());
    for i in 0..model.scores.nrows() {
        let row: Vec<f64> = model.scores.row(i).iter().copied().collect();
        doc.push_floats(&format!("scores.{i}"), &row);
    }
    if let Some(r) = &model.regressors {
        doc.push_display("regressors.rows", r.len());
        doc.push_display("regressors.dim", r.dim());
        for i in 0..r.len() {
            let row: Vec<f64> = r.rows.row(i).iter().copied().collect();
            doc.push_floats(&format!("regressors.{i}"), &row);
        }
    }
    doc.render("functional dynamic factor model")
}

pub fn model_from_str(text: &str) -> Result<FdfmModel, FdfmError> {
    let doc = KeyedDocument::parse(text)?;
    let format: String = doc.value("format")?;
    if format != FORMAT {
        return Err(FdfmError::Document(format!("unsupported format `{format}`")));
    }
    let kc: usize = doc.value("factors")?;
    let p: usize = doc.value("ar_order")?;
    let grid = KnotGrid::new(doc.values("knots")?)?;
    let m = grid.len();
    let inner_product = match doc.value::<String>("inner_product")?.as_str() {
        "discrete" => InnerProduct::Discrete,
        "quadrature" => InnerProduct::Quadrature,
        other => return Err(FdfmError::Document(format!("unknown inner product `{other}`"))),
    };
    let mut loadings = Vec::with_capacity(kc);
    let mut factors = Vec::with_capacity(kc);
    for k in 0..kc {
        loadings.push(NaturalCubicSpline::from_parts(
            grid.clone(),
            doc.values_n(&format!("loading.{k}.values"), m)?,
            doc.values_n(&format!("loading.{k}.second_derivatives"), m)?,
        )?);
        let mu_key = format!("factor.{k}.regressor_coefficients");
        factors.push(ArProcess {
            coefficients: doc.values_n(&format!("factor.{k}.coefficients"), p)?,
            intercept: doc.value(&format!("factor.{k}.intercept"))?,
            innovation_variance: doc.value(&format!("factor.{k}.innovation_variance"))?,
            regressor_coefficients: if doc.has(&mu_key) { Some(doc.values(&mu_key)?) } else { None },
        });
    }
    let n: usize = doc.value("scores.rows")?;
    let mut scores = DMatrix::zeros(n, kc);
    for i in 0..n {
        let row: Vec<f64> = doc.values_n(&format!("scores.{i}"), kc)?;
        for k in 0..kc {
            scores[(i, k)] = row[k];
        }
    }
    let regressors = if doc.has("regressors.rows") {
        let rows: usize = doc.value("regressors.rows")?;
        let dim: usize = doc.value("regressors.dim")?;
        let mut a = DMatrix::zeros(rows, dim);
        for i in 0..rows {
            let row: Vec<f64> = doc.values_n(&format!("regressors.{i}"), dim)?;
            for d in 0..dim {
                a[(i, d)] = row[d];
            }
        }
        Some(RegressorPanel::new(a))
    } else {
        None
    };
    Ok(FdfmModel {
        grid,
        loadings,
        factors,
        scores,
        sigma2: doc.value("sigma2")?,
        lambdas: doc.values_n("lambdas", kc)?,
        fit_trace: doc.values("fit_trace")?,
        converged: doc.value("converged")?,
        iterations: doc.value("iterations")?,
        inner_product,
        regressors,
    })
}
