//! JSON form of a synthesized design.
//!
//! Every per-stage field is an array of row-major matrices, one entry per
//! stage; stationary designs hold a single entry. A null sensor (`r = 0`)
//! appears as an empty matrix.

use serde::{Deserialize, Serialize};

use super::SynthesisDesign;
use crate::error::{Error, Result};
use crate::model::file::{from_mat, Rows};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "D")]
    pub budget: f64,
    #[serde(rename = "DI_bits")]
    pub di_bits: f64,
    #[serde(rename = "J")]
    pub cost: f64,
    pub rank: Vec<usize>,
    pub gap_estimate: f64,
    #[serde(rename = "K")]
    pub k: Vec<Rows>,
    #[serde(rename = "C")]
    pub c: Vec<Rows>,
    #[serde(rename = "V")]
    pub v: Vec<Rows>,
    #[serde(rename = "L")]
    pub l: Vec<Rows>,
    #[serde(rename = "P_filt")]
    pub p_filt: Vec<Rows>,
    #[serde(rename = "P_pred")]
    pub p_pred: Vec<Rows>,
    #[serde(rename = "Ltilde", default, skip_serializing_if = "Option::is_none")]
    pub ltilde: Option<Vec<Rows>>,
    #[serde(rename = "Psi", default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<Rows>>,
}

impl From<&SynthesisDesign> for DesignRecord {
    fn from(d: &SynthesisDesign) -> Self {
        let rows = |ms: &[crate::linalg::Mat]| ms.iter().map(from_mat).collect::<Vec<_>>();
        DesignRecord {
            kind: d.kind.as_str().to_string(),
            budget: d.d_requested,
            di_bits: d.di_bits,
            cost: d.j_analytic,
            rank: d.sensor.rank.clone(),
            gap_estimate: d.gap_estimate,
            k: rows(&d.bundle.k),
            c: rows(&d.sensor.c),
            v: rows(&d.sensor.v),
            l: rows(&d.l),
            p_filt: rows(&d.schedule.p_filt),
            p_pred: rows(&d.schedule.p_pred),
            ltilde: d.prekf.as_ref().map(|p| rows(&p.ltilde)),
            psi: d.prekf.as_ref().map(|p| rows(&p.psi)),
        }
    }
}

pub fn design_to_json(design: &SynthesisDesign) -> Result<String> {
    serde_json::to_string_pretty(&DesignRecord::from(design))
        .map_err(|e| Error::Parse(e.to_string()))
}

pub fn design_from_json(text: &str) -> Result<DesignRecord> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}
