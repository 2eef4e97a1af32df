//! Hardware, format and orchestration parameters.
//!
//! Everything here is plain data, validated once after construction and then
//! shared read-only. Config files are TOML or JSON with one table per struct;
//! individual fields can be overridden with `section.field=value` strings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel/bank organization and address interleaving of the DRAM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub num_channels: usize,
    pub banks_per_channel: usize,
    pub row_buffer_bytes: usize,
    pub interleave_gran_bytes: usize,
    /// Per-channel peak bandwidth in GB/s (bytes per ns).
    pub channel_bandwidth_gbps: f64,
    pub dram_word_bits: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        // LPDDR5x-7500, eight 16-bit channels, 120 GB/s aggregate.
        Self {
            num_channels: 8,
            banks_per_channel: 16,
            row_buffer_bytes: 2048,
            interleave_gran_bytes: 256,
            channel_bandwidth_gbps: 15.0,
            dram_word_bits: 256,
        }
    }
}

impl MemoryConfig {
    pub fn total_banks(&self) -> usize {
        self.num_channels * self.banks_per_channel
    }

    pub fn word_bytes(&self) -> usize {
        self.dram_word_bits / 8
    }

    /// Interleave chunks that fit in one row buffer.
    pub fn chunks_per_row(&self) -> usize {
        self.row_buffer_bytes / self.interleave_gran_bytes
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 || self.banks_per_channel == 0 {
            return Err(Error::Config("total_banks must be positive".into()));
        }
        if self.dram_word_bits == 0 || !self.dram_word_bits.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "dram_word_bits {} is not a whole number of bytes",
                self.dram_word_bits
            )));
        }
        let g = self.interleave_gran_bytes;
        if !g.is_power_of_two() || g < self.dram_word_bits / 8 {
            return Err(Error::Config(format!(
                "interleave_gran_bytes {g} must be a power of two >= one DRAM word"
            )));
        }
        if self.row_buffer_bytes == 0 || !self.row_buffer_bytes.is_multiple_of(g) {
            return Err(Error::Config(format!(
                "row_buffer_bytes {} is not a multiple of interleave_gran_bytes {g}",
                self.row_buffer_bytes
            )));
        }
        if !(self.channel_bandwidth_gbps > 0.0) {
            return Err(Error::Config("channel_bandwidth_gbps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-bank PIM ALU resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PimConfig {
    pub regs_per_alu: usize,
    pub reg_size_bits: usize,
    /// PIM column-command rate relative to ordinary reads/writes.
    pub pim_rate_ratio: f64,
    pub has_reduction_tree: bool,
}

impl Default for PimConfig {
    fn default() -> Self {
        Self { regs_per_alu: 16, reg_size_bits: 256, pim_rate_ratio: 0.5, has_reduction_tree: false }
    }
}

impl PimConfig {
    pub fn validate(&self, mem: &MemoryConfig) -> Result<()> {
        if self.regs_per_alu < 2 {
            return Err(Error::Config("regs_per_alu must be at least 2".into()));
        }
        if !(self.pim_rate_ratio > 0.0 && self.pim_rate_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "pim_rate_ratio {} outside (0, 1]",
                self.pim_rate_ratio
            )));
        }
        if self.reg_size_bits != mem.dram_word_bits {
            return Err(Error::Config(format!(
                "reg_size_bits {} must equal dram_word_bits {}",
                self.reg_size_bits, mem.dram_word_bits
            )));
        }
        Ok(())
    }

    /// SIMD lanes per register for elements of `bits` width.
    pub fn lanes(&self, bits: u32) -> usize {
        self.reg_size_bits / bits as usize
    }
}

/// DRAM command timing constants, all in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DramTiming {
    /// One ordinary column command (one DRAM word on the channel bus).
    pub t_ccd_ns: f64,
    /// All-bank precharge + activate.
    pub t_row_switch_ns: f64,
    /// Bus direction change between writes and reads.
    pub t_turnaround_ns: f64,
}

impl DramTiming {
    /// Defaults derived from the channel bandwidth: one word per t_ccd.
    pub fn derived(mem: &MemoryConfig) -> Self {
        Self {
            t_ccd_ns: mem.word_bytes() as f64 / mem.channel_bandwidth_gbps,
            t_row_switch_ns: 36.0,
            t_turnaround_ns: 14.0,
        }
    }

    /// Duration of one PIM command slot.
    pub fn pim_slot_ns(&self, pim: &PimConfig) -> f64 {
        self.t_ccd_ns / pim.pim_rate_ratio
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_ccd_ns", self.t_ccd_ns),
            ("t_row_switch_ns", self.t_row_switch_ns),
            ("t_turnaround_ns", self.t_turnaround_ns),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Timing as written in config files; `t_ccd_ns` falls back to the derived value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub t_ccd_ns: Option<f64>,
    pub t_row_switch_ns: f64,
    pub t_turnaround_ns: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self { t_ccd_ns: None, t_row_switch_ns: 36.0, t_turnaround_ns: 14.0 }
    }
}

/// Element format of weights/input vector or of the output vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataFormat {
    pub bits: u32,
    /// Elements along K sharing one scale factor.
    pub sf_block: Option<u32>,
    pub sf_bits: u32,
}

impl DataFormat {
    pub const fn int(bits: u32) -> Self {
        Self { bits, sf_block: None, sf_bits: 8 }
    }

    pub const fn with_scales(bits: u32, sf_block: u32) -> Self {
        Self { bits, sf_block: Some(sf_block), sf_bits: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.bits, 4 | 8 | 16) {
            return Err(Error::Config(format!("element width {} not in {{4, 8, 16}}", self.bits)));
        }
        if let Some(b) = self.sf_block {
            if b < 2 || !b.is_power_of_two() {
                return Err(Error::Config(format!("sf_block {b} must be a power of two >= 2")));
            }
        }
        if !matches!(self.sf_bits, 8 | 16) {
            return Err(Error::Config(format!("sf_bits {} not in {{8, 16}}", self.sf_bits)));
        }
        Ok(())
    }

    /// Inclusive value range of a signed element of this width.
    pub fn range(&self) -> (i32, i32) {
        signed_range(self.bits)
    }
}

pub(crate) fn signed_range(bits: u32) -> (i32, i32) {
    let half = 1i32 << (bits - 1);
    (-half, half - 1)
}

/// Defaults used when a problem is built from config alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatConfig {
    pub in_bits: u32,
    pub out_bits: u32,
    pub sf_block: Option<u32>,
    pub sf_bits: u32,
}

impl Default for FormatConfig {
    fn default() -> Self {
        Self { in_bits: 8, out_bits: 16, sf_block: None, sf_bits: 8 }
    }
}

impl FormatConfig {
    pub fn in_fmt(&self) -> DataFormat {
        DataFormat { bits: self.in_bits, sf_block: self.sf_block, sf_bits: self.sf_bits }
    }

    pub fn out_fmt(&self) -> DataFormat {
        DataFormat::int(self.out_bits)
    }
}

/// Host SoC roofline parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocConfig {
    /// Peak tera-ops per second (one multiply-add counts as two ops).
    pub tops: f64,
    /// Aggregate memory bandwidth in GB/s.
    pub mem_bw_gbps: f64,
}

impl Default for SocConfig {
    fn default() -> Self {
        Self { tops: 33.2, mem_bw_gbps: 120.0 }
    }
}

impl SocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tops > 0.0 && self.mem_bw_gbps > 0.0) {
            return Err(Error::Config("soc tops and mem_bw_gbps must be positive".into()));
        }
        Ok(())
    }
}

/// Element order inside a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntraTileOrder {
    #[default]
    ColumnMajor,
    RowMajor,
}

/// Which family of placements to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// Planned tile shape with column-row tile order.
    #[default]
    Planned,
    /// Column-vector tiles in column order (plain column-major matrix).
    ColumnMajor,
    /// Row-vector tiles in row order (plain row-major matrix).
    RowMajor,
}

/// Orchestration and placement knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Knobs {
    /// Registers holding input-vector words; `None` means half the register file.
    pub iv_regs: Option<usize>,
    /// Fixed CR degree; `None` picks the maximum the registers allow.
    pub cr_degree: Option<usize>,
    pub split_k: usize,
    pub intra_tile_order: IntraTileOrder,
    pub layout: LayoutKind,
}

impl Default for Knobs {
    fn default() -> Self {
        Self {
            iv_regs: None,
            cr_degree: None,
            split_k: 1,
            intra_tile_order: IntraTileOrder::ColumnMajor,
            layout: LayoutKind::Planned,
        }
    }
}

impl Knobs {
    pub fn iv_regs_for(&self, pim: &PimConfig) -> usize {
        self.iv_regs.unwrap_or(pim.regs_per_alu / 2).max(1)
    }
}

/// Inference scenario knobs for the end-to-end model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct E2eConfig {
    pub prompt_len: usize,
    pub gen_tokens: usize,
    /// Bits per cached key/value element; defaults to the 8-bit weight width.
    pub kv_bits: u32,
    /// Bits per activation element touched by vector ops.
    pub act_bits: u32,
    pub include_lm_head: bool,
}

impl Default for E2eConfig {
    fn default() -> Self {
        Self { prompt_len: 1920, gen_tokens: 128, kv_bits: 8, act_bits: 16, include_lm_head: false }
    }
}

/// Everything a run needs, as loaded from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub memory: MemoryConfig,
    pub pim: PimConfig,
    pub timing: TimingConfig,
    pub soc: SocConfig,
    pub format: FormatConfig,
    pub knobs: Knobs,
    pub e2e: E2eConfig,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.memory.validate()?;
        self.pim.validate(&self.memory)?;
        self.dram_timing().validate()?;
        self.soc.validate()?;
        self.format.in_fmt().validate()?;
        self.format.out_fmt().validate()?;
        if self.knobs.split_k == 0 || !self.knobs.split_k.is_power_of_two() {
            return Err(Error::Config(format!(
                "split_k {} must be a power of two",
                self.knobs.split_k
            )));
        }
        Ok(())
    }

    pub fn dram_timing(&self) -> DramTiming {
        let derived = DramTiming::derived(&self.memory);
        DramTiming {
            t_ccd_ns: self.timing.t_ccd_ns.unwrap_or(derived.t_ccd_ns),
            t_row_switch_ns: self.timing.t_row_switch_ns,
            t_turnaround_ns: self.timing.t_turnaround_ns,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SystemConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Decode(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `section.field=value` overrides. Values are read as JSON
    /// literals when possible and as bare strings otherwise.
    pub fn with_overrides<'a, I>(&self, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut tree = serde_json::to_value(self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let key = key.trim();
            let (section, field) =
                key.split_once('.').ok_or_else(|| Error::UnknownKey(key.to_string()))?;
            let table = tree
                .get_mut(section)
                .and_then(|v| v.as_object_mut())
                .ok_or_else(|| Error::UnknownKey(key.to_string()))?;
            if !table.contains_key(field) {
                return Err(Error::UnknownKey(key.to_string()));
            }
            let raw = raw.trim();
            let value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            table.insert(field.to_string(), value);
        }
        let cfg: SystemConfig = serde_json::from_value(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collects overrides from `PREFIX_SECTION__FIELD=value` variables.
    pub fn env_overrides(prefix: &str, vars: impl IntoIterator<Item = (String, String)>) -> Vec<String> {
        let mut out: Vec<String> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(prefix)?;
                let (section, field) = rest.split_once("__")?;
                Some(format!("{}.{}={}", section.to_lowercase(), field.to_lowercase(), v))
            })
            .collect();
        out.sort();
        out
    }
}

/// Elements of `fmt` that fill one interleave chunk.
pub fn elements_per_tile(mem: &MemoryConfig, fmt: &DataFormat) -> Result<usize> {
    let bits = mem.interleave_gran_bytes * 8;
    if fmt.bits == 0 || !bits.is_multiple_of(fmt.bits as usize) {
        return Err(Error::Config(format!(
            "interleave granularity of {bits} bits is not divisible by {}-bit elements",
            fmt.bits
        )));
    }
    Ok(bits / fmt.bits as usize)
}

/// Page size that keeps one full row-buffer stripe across all banks inside
/// one physical page.
pub fn preferred_page_size(mem: &MemoryConfig) -> usize {
    mem.row_buffer_bytes * mem.total_banks()
}

/// Smallest page that still lets one command broadcast to every bank.
pub fn minimum_page_size(mem: &MemoryConfig) -> usize {
    mem.interleave_gran_bytes * mem.total_banks()
}

/// Best-case bandwidth boost of all-bank commands over ordinary reads.
pub fn roofline_speedup(mem: &MemoryConfig, pim: &PimConfig) -> f64 {
    mem.banks_per_channel as f64 * pim.pim_rate_ratio
}

/// Roofline after paying one row switch per fully streamed row buffer.
pub fn effective_roofline(mem: &MemoryConfig, pim: &PimConfig, timing: &DramTiming) -> f64 {
    let words = (mem.row_buffer_bytes / mem.word_bytes()) as f64;
    let stream = words * timing.pim_slot_ns(pim);
    roofline_speedup(mem, pim) * stream / (stream + timing.t_row_switch_ns)
}
