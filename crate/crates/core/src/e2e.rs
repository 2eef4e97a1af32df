//! Per-token and end-to-end inference latency of decoder-only transformers
//! with their GEMVs on PIM or on the SoC.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::{E2eConfig, SocConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::problem::GemvProblem;
use crate::timing::pim_speedup;

const CATALOG_JSON: &str = include_str!("../data/opt_catalog.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub num_layers: usize,
    pub hidden: usize,
    pub ffn_dim: usize,
    pub heads: usize,
    pub vocab: usize,
    pub params: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GemvKind {
    Qkv,
    OutProj,
    Fc1,
    Fc2,
    LmHead,
}

impl GemvKind {
    pub fn label(&self) -> &'static str {
        match self {
            GemvKind::Qkv => "qkv",
            GemvKind::OutProj => "out_proj",
            GemvKind::Fc1 => "fc1",
            GemvKind::Fc2 => "fc2",
            GemvKind::LmHead => "lm_head",
        }
    }
}

/// One weight GEMV of a layer, `m` outputs by `k` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemvShape {
    pub kind: GemvKind,
    pub m: usize,
    pub k: usize,
}

/// Keeps every derived GEMV size and byte count well inside `usize`.
const MAX_DIM: usize = 1 << 24;

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.num_layers, self.hidden, self.ffn_dim, self.heads, self.vocab];
        if dims.contains(&0) || self.params == 0 {
            return Err(Error::Config(format!("model {} has a zero dimension", self.name)));
        }
        if dims.iter().any(|&d| d > MAX_DIM) {
            return Err(Error::Config(format!("model {} has a dimension above {MAX_DIM}", self.name)));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model {}: hidden {} not divisible by {} heads",
                self.name, self.hidden, self.heads
            )));
        }
        Ok(())
    }

    /// QKV, output projection, FC1 and FC2 of one layer.
    pub fn layer_gemvs(&self) -> [GemvShape; 4] {
        let (h, f) = (self.hidden, self.ffn_dim);
        [
            GemvShape { kind: GemvKind::Qkv, m: 3 * h, k: h },
            GemvShape { kind: GemvKind::OutProj, m: h, k: h },
            GemvShape { kind: GemvKind::Fc1, m: f, k: h },
            GemvShape { kind: GemvKind::Fc2, m: h, k: f },
        ]
    }

    pub fn lm_head(&self) -> GemvShape {
        GemvShape { kind: GemvKind::LmHead, m: self.vocab, k: self.hidden }
    }
}

/// The OPT suite from 125M to 30B parameters.
pub fn catalog_models() -> Vec<ModelSpec> {
    parse_catalog(CATALOG_JSON).expect("bundled catalog is valid")
}

/// Parses a JSON array of model specs.
pub fn parse_catalog(text: &str) -> Result<Vec<ModelSpec>> {
    let models: Vec<ModelSpec> = serde_json::from_str(text)?;
    for m in &models {
        m.validate()?;
    }
    Ok(models)
}

pub fn find_model(name: &str) -> Option<ModelSpec> {
    catalog_models().into_iter().find(|m| m.name.eq_ignore_ascii_case(name))
}

/// Generation scenario. Only batch size 1 is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceScenario {
    pub prompt_len: usize,
    pub gen_tokens: usize,
    pub batch: usize,
}

impl InferenceScenario {
    pub fn from_config(e: &E2eConfig) -> Self {
        Self { prompt_len: e.prompt_len, gen_tokens: e.gen_tokens, batch: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch != 1 {
            return Err(Error::Config(format!("batch {} unsupported, only 1", self.batch)));
        }
        Ok(())
    }
}

/// Price of one GEMV shape on both engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GemvCost {
    pub shape: GemvShape,
    pub soc_ns: f64,
    /// PIM time plus the host reduction of split-K partials.
    pub pim_ns: f64,
}

impl GemvCost {
    pub fn speedup(&self) -> f64 {
        self.soc_ns / self.pim_ns
    }
}

/// GEMVs of one token, priced once; the layer list repeats `num_layers` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCosts {
    pub layer: Vec<GemvCost>,
    pub head: Option<GemvCost>,
}

impl ModelCosts {
    pub fn gemv_ns(&self, model: &ModelSpec, use_pim: bool) -> f64 {
        let pick = |c: &GemvCost| if use_pim { c.pim_ns } else { c.soc_ns };
        model.num_layers as f64 * self.layer.iter().map(pick).sum::<f64>() + self.head.as_ref().map_or(0.0, pick)
    }
}

pub fn gemv_costs(model: &ModelSpec, cfg: &SystemConfig) -> Result<ModelCosts> {
    let mut cache: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    let mut price = |s: GemvShape| -> Result<GemvCost> {
        if let Some(&(soc_ns, pim_ns)) = cache.get(&(s.m, s.k)) {
            return Ok(GemvCost { shape: s, soc_ns, pim_ns });
        }
        let p = GemvProblem::new(s.m, s.k, cfg.format.in_fmt(), cfg.format.out_fmt())?;
        let r = pim_speedup(&p, cfg)?;
        let pim_ns = r.pim_time_ns + r.breakdown.soc_reduce_ns;
        cache.insert((s.m, s.k), (r.soc_time_ns, pim_ns));
        Ok(GemvCost { shape: s, soc_ns: r.soc_time_ns, pim_ns })
    };
    let layer = model.layer_gemvs().into_iter().map(&mut price).collect::<Result<Vec<_>>>()?;
    let head = if cfg.e2e.include_lm_head { Some(price(model.lm_head())?) } else { None };
    Ok(ModelCosts { layer, head })
}

/// Non-GEMV work of one token, always on the SoC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLatency {
    pub gemv_ns: f64,
    pub attention_ns: f64,
    pub vector_ns: f64,
}

impl TokenLatency {
    pub fn total_ns(&self) -> f64 {
        self.gemv_ns + self.attention_ns + self.vector_ns
    }
}

fn roofline(flops: f64, bytes: f64, soc: &SocConfig) -> f64 {
    (flops / (soc.tops * 1e3)).max(bytes / soc.mem_bw_gbps)
}

/// Attention reads the whole KV cache at the current context length.
pub fn attention_ns(model: &ModelSpec, context: usize, cfg: &SystemConfig) -> f64 {
    let elems = 2.0 * context as f64 * model.hidden as f64;
    let per_layer = roofline(2.0 * elems, elems * cfg.e2e.kv_bits as f64 / 8.0, &cfg.soc);
    model.num_layers as f64 * per_layer
}

/// Layer norms, residual adds, activation and softmax at memory bandwidth.
pub fn vector_ns(model: &ModelSpec, context: usize, cfg: &SystemConfig) -> f64 {
    let (h, f) = (model.hidden as f64, model.ffn_dim as f64);
    let softmax = 2.0 * (model.heads * context) as f64;
    let elems = 10.0 * h + 2.0 * f + softmax;
    let per_layer = roofline(elems, elems * cfg.e2e.act_bits as f64 / 8.0, &cfg.soc);
    model.num_layers as f64 * per_layer
}

fn token_latency(model: &ModelSpec, costs: &ModelCosts, cfg: &SystemConfig, use_pim: bool, context: usize) -> TokenLatency {
    TokenLatency {
        gemv_ns: costs.gemv_ns(model, use_pim),
        attention_ns: attention_ns(model, context, cfg),
        vector_ns: vector_ns(model, context, cfg),
    }
}

/// Latency of generating one token with `context` tokens already cached.
pub fn per_token_latency(model: &ModelSpec, cfg: &SystemConfig, use_pim: bool, context: usize) -> Result<TokenLatency> {
    let costs = gemv_costs(model, cfg)?;
    Ok(token_latency(model, &costs, cfg, use_pim, context))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndToEnd {
    pub prompt_ns: f64,
    pub gen_ns: f64,
    pub total_ns: f64,
    pub token_gen_fraction: f64,
}

/// The prompt runs compute-bound on the SoC in both cases.
pub fn prompt_ns(model: &ModelSpec, s: &InferenceScenario, soc: &SocConfig) -> f64 {
    2.0 * model.params as f64 * s.prompt_len as f64 / (soc.tops * 1e3)
}

fn end_to_end_with(model: &ModelSpec, costs: &ModelCosts, s: &InferenceScenario, cfg: &SystemConfig, use_pim: bool) -> EndToEnd {
    let prompt = prompt_ns(model, s, &cfg.soc);
    let gen: f64 = (0..s.gen_tokens)
        .map(|i| token_latency(model, costs, cfg, use_pim, s.prompt_len + i).total_ns())
        .sum();
    let total = prompt + gen;
    EndToEnd {
        prompt_ns: prompt,
        gen_ns: gen,
        total_ns: total,
        token_gen_fraction: if total > 0.0 { gen / total } else { 0.0 },
    }
}

pub fn end_to_end_time(model: &ModelSpec, s: &InferenceScenario, cfg: &SystemConfig, use_pim: bool) -> Result<EndToEnd> {
    s.validate()?;
    let costs = gemv_costs(model, cfg)?;
    Ok(end_to_end_with(model, &costs, s, cfg, use_pim))
}

/// Both engines side by side for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub costs: ModelCosts,
    pub soc: EndToEnd,
    pub pim: EndToEnd,
    /// Ratio of mean per-token latencies over the generated tokens.
    pub per_token_speedup: f64,
    pub e2e_speedup: f64,
    /// Speedup of the GEMVs alone, weighted by their SoC time.
    pub gemv_speedup: f64,
}

impl ModelReport {
    /// End-to-end speedup recomputed from the prompt share and the
    /// generation speedup.
    pub fn amdahl_speedup(&self) -> f64 {
        let f = self.soc.gen_ns / self.soc.total_ns;
        1.0 / ((1.0 - f) + f / self.per_token_speedup)
    }
}

pub fn evaluate_model(model: &ModelSpec, cfg: &SystemConfig) -> Result<ModelReport> {
    let s = InferenceScenario::from_config(&cfg.e2e);
    s.validate()?;
    let costs = gemv_costs(model, cfg)?;
    let soc = end_to_end_with(model, &costs, &s, cfg, false);
    let pim = end_to_end_with(model, &costs, &s, cfg, true);
    let gemv_speedup = costs.gemv_ns(model, false) / costs.gemv_ns(model, true);
    Ok(ModelReport {
        model: model.name.clone(),
        per_token_speedup: soc.gen_ns / pim.gen_ns,
        e2e_speedup: soc.total_ns / pim.total_ns,
        gemv_speedup,
        costs,
        soc,
        pim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_matches_opt_table() {
        let c = catalog_models();
        let hidden: Vec<_> = c.iter().map(|m| m.hidden).collect();
        let layers: Vec<_> = c.iter().map(|m| m.num_layers).collect();
        assert_eq!(hidden, [768, 1024, 2048, 2560, 4096, 5120, 7168]);
        assert_eq!(layers, [12, 24, 24, 32, 32, 40, 48]);
        assert!(c.iter().all(|m| m.ffn_dim == 4 * m.hidden));
        let g: Vec<_> = c[0].layer_gemvs().iter().map(|s| (s.m, s.k)).collect();
        assert_eq!(g, [(2304, 768), (768, 768), (3072, 768), (768, 3072)]);
        assert_eq!(find_model("13b").unwrap().hidden, 5120);
    }

    #[test]
    fn catalog_rejects_bad_entries() {
        assert!(parse_catalog("[{\"name\":\"x\"}]").is_err());
        let bad = r#"[{"name":"x","num_layers":1,"hidden":10,"ffn_dim":40,"heads":3,"vocab":5,"params":1}]"#;
        assert!(parse_catalog(bad).is_err());
        assert!(parse_catalog("not json").is_err());
    }

    #[test]
    fn soc_token_is_weight_streaming() {
        let cfg = SystemConfig::default();
        let m = find_model("13B").unwrap();
        let t = per_token_latency(&m, &cfg, false, 0).unwrap();
        assert_eq!(t.attention_ns, 0.0);
        let weights = 40.0 * 12.0 * 5120.0f64 * 5120.0;
        assert!((t.gemv_ns - weights / 120.0).abs() < 1e-6 * t.gemv_ns);
    }

    #[test]
    fn no_generated_tokens_is_prompt_only() {
        let cfg = SystemConfig::default();
        let m = find_model("125M").unwrap();
        let s = InferenceScenario { prompt_len: 1920, gen_tokens: 0, batch: 1 };
        let e = end_to_end_time(&m, &s, &cfg, true).unwrap();
        assert_eq!(e.total_ns, e.prompt_ns);
        assert!(end_to_end_time(&m, &InferenceScenario { batch: 2, ..s }, &cfg, true).is_err());
    }

    #[test]
    fn amdahl_identity_and_bound() {
        let cfg = SystemConfig::default();
        for name in ["125M", "13B"] {
            let r = evaluate_model(&find_model(name).unwrap(), &cfg).unwrap();
            assert!((r.amdahl_speedup() - r.e2e_speedup).abs() < 1e-9 * r.e2e_speedup, "{name}");
            assert!(r.e2e_speedup <= r.per_token_speedup);
            assert!(r.soc.token_gen_fraction >= 0.85, "{name} {}", r.soc.token_gen_fraction);
            assert_eq!(r.soc.prompt_ns, r.pim.prompt_ns);
        }
    }

    #[test]
    fn lm_head_adds_a_gemv() {
        let m = find_model("125M").unwrap();
        let cfg = SystemConfig::default();
        let with = cfg.with_overrides(["e2e.include_lm_head=true"]).unwrap();
        let a = per_token_latency(&m, &cfg, false, 10).unwrap();
        let b = per_token_latency(&m, &with, false, 10).unwrap();
        let head = 50272.0 * 768.0 / 120.0;
        assert!((b.gemv_ns - a.gemv_ns - head).abs() < 1e-6 * head);
    }
}
