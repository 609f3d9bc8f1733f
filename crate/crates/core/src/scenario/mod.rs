//! Scenario files: TOML, every key optional except `name` and `[channel]`.

pub mod presets;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::app::{load_ladder, AbrKind, Ladder, PlayerConfig, VbrSourceConfig};
use crate::channel::{
    load_trace, synth_los_nlos, ChannelTrace, LosNlosParams, TraceSample, DEFAULT_HARQ_RETX_DELAY_US,
    DEFAULT_MAX_HARQ_RETX,
};
use crate::queue::{
    bdp_buffer_bytes, ActionMode, AqmConfig, AredConfig, CodelConfig, L4sConfig, RedConfig,
};
use crate::sim::SimTime;
use crate::transport::{CcAlgo, LogLevel, LossDetection, SenderConfig};
use crate::world::{AppSpec, FlowSpec, WorldConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

macro_rules! default_fn {
    ($name:ident, $t:ty, $v:expr) => {
        fn $name() -> $t {
            $v
        }
    };
}

default_fn!(d_horizon, f64, 100.0);
default_fn!(d_num_flows, usize, 5);
default_fn!(d_owd, f64, 4.0);
default_fn!(d_los, f64, 500.0);
default_fn!(d_phase_s, f64, 20.0);
default_fn!(d_harq, u32, DEFAULT_MAX_HARQ_RETX);
default_fn!(d_harq_delay, f64, DEFAULT_HARQ_RETX_DELAY_US as f64 / 1e3);
default_fn!(d_bdp_pct, f64, 200.0);
default_fn!(d_nominal, f64, 500.0);
default_fn!(d_min_pct, f64, 90.0);
default_fn!(d_max_pct, f64, 100.0);
default_fn!(d_p_max, f64, 0.1);
default_fn!(d_w_q, f64, 0.002);
default_fn!(d_ared_iv, f64, 500.0);
default_fn!(d_codel_target, f64, 10.0);
default_fn!(d_codel_iv, f64, 100.0);
default_fn!(d_l4s_low, f64, 10.0);
default_fn!(d_l4s_high, f64, 25.0);
default_fn!(d_l4s_alpha, f64, 0.25);
default_fn!(d_l4s_period, f64, 1.0);
default_fn!(d_mss, u32, 1200);
default_fn!(d_true, bool, true);
default_fn!(d_rto_min, f64, 20.0);
default_fn!(d_datarate, f64, 25.0);
default_fn!(d_fps, f64, 60.0);
default_fn!(d_max_buf, f64, 6.0);
default_fn!(d_seg, f64, 2.0);
default_fn!(d_startup, f64, 2.0);
default_fn!(d_sample, f64, 100.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "d_horizon")]
    pub horizon_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub queue: QueueSpec,
    /// Template copied `num_flows` times unless `flows` lists them explicitly.
    #[serde(default)]
    pub flow: FlowTemplate,
    #[serde(default = "d_num_flows")]
    pub num_flows: usize,
    #[serde(default)]
    pub flows: Vec<FlowTemplate>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Constant {
        capacity_mbps: f64,
        #[serde(default = "d_owd")]
        owd_ms: f64,
        #[serde(default)]
        loss: f64,
        #[serde(default = "d_harq")]
        max_harq_retx: u32,
        #[serde(default = "d_harq_delay")]
        harq_retx_delay_ms: f64,
    },
    LosNlos {
        #[serde(default = "d_los")]
        los_capacity_mbps: f64,
        /// No sensible default exists; must be given.
        nlos_capacity_mbps: f64,
        #[serde(default = "d_phase_s")]
        los_s: f64,
        #[serde(default = "d_phase_s")]
        nlos_s: f64,
        #[serde(default)]
        los_loss: f64,
        #[serde(default)]
        nlos_loss: f64,
        #[serde(default = "d_owd")]
        owd_ms: f64,
        #[serde(default = "d_harq")]
        max_harq_retx: u32,
        #[serde(default = "d_harq_delay")]
        harq_retx_delay_ms: f64,
    },
    Trace {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AqmKind {
    #[default]
    Droptail,
    Red,
    Ared,
    Codel,
    L4s,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSpec {
    #[serde(default)]
    pub aqm: AqmKind,
    #[serde(default)]
    pub mode: ActionMode,
    /// Overrides the BDP sizing when set.
    #[serde(default)]
    pub buffer_bytes: Option<u64>,
    #[serde(default = "d_bdp_pct")]
    pub buffer_bdp_pct: f64,
    #[serde(default = "d_nominal")]
    pub bdp_nominal_mbps: f64,
    #[serde(default = "d_owd")]
    pub bdp_owd_ms: f64,
    #[serde(default = "d_min_pct")]
    pub red_min_pct: f64,
    #[serde(default = "d_max_pct")]
    pub red_max_pct: f64,
    #[serde(default = "d_p_max")]
    pub red_p_max: f64,
    #[serde(default = "d_w_q")]
    pub red_w_q: f64,
    #[serde(default = "d_ared_iv")]
    pub ared_interval_ms: f64,
    #[serde(default = "d_codel_target")]
    pub codel_target_ms: f64,
    #[serde(default = "d_codel_iv")]
    pub codel_interval_ms: f64,
    #[serde(default = "d_l4s_low")]
    pub l4s_low_ms: f64,
    #[serde(default = "d_l4s_high")]
    pub l4s_high_ms: f64,
    #[serde(default = "d_l4s_alpha")]
    pub l4s_alpha: f64,
    #[serde(default = "d_l4s_period")]
    pub l4s_period_ms: f64,
}

impl Default for QueueSpec {
    fn default() -> Self {
        toml::from_str("").expect("all queue keys have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AppToml {
    Vbr {
        #[serde(default = "d_datarate")]
        datarate_mbps: f64,
        #[serde(default = "d_fps")]
        fps: f64,
    },
    Has {
        #[serde(default)]
        abr: AbrKind,
        #[serde(default = "d_max_buf")]
        max_buffer_s: f64,
        #[serde(default = "d_seg")]
        segment_s: f64,
        #[serde(default = "d_startup")]
        startup_s: f64,
        /// CSV ladder; the built-in ten-rung ladder when absent.
        #[serde(default)]
        ladder: Option<PathBuf>,
    },
    Bulk,
}

impl Default for AppToml {
    fn default() -> Self {
        AppToml::Vbr {
            datarate_mbps: d_datarate(),
            fps: d_fps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowTemplate {
    #[serde(default)]
    pub app: AppToml,
    #[serde(default)]
    pub cc: CcAlgo,
    #[serde(default)]
    pub ecn: bool,
    #[serde(default)]
    pub loss_detection: LossDetection,
    #[serde(default)]
    pub hystart: bool,
    #[serde(default = "d_true")]
    pub pacing: bool,
    #[serde(default = "d_mss")]
    pub mss: u32,
    #[serde(default = "d_rto_min")]
    pub rto_min_ms: f64,
    #[serde(default)]
    pub start_s: f64,
    /// Per-flow queue; the scenario-wide `[queue]` when absent.
    #[serde(default)]
    pub queue: Option<QueueSpec>,
}

impl Default for FlowTemplate {
    fn default() -> Self {
        toml::from_str("").expect("all flow keys have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "d_sample")]
    pub sample_interval_ms: f64,
    #[serde(default = "d_sample")]
    pub rate_window_ms: f64,
    #[serde(default)]
    pub log_queue_events: bool,
    #[serde(default)]
    pub transport_log: LogLevel,
}

impl Default for OutputSpec {
    fn default() -> Self {
        toml::from_str("").expect("all output keys have defaults")
    }
}

fn ms(x: f64) -> SimTime {
    SimTime::from_secs_f64(x / 1e3)
}

fn mbps(x: f64) -> u64 {
    (x * 1e6).round() as u64
}

impl QueueSpec {
    pub fn capacity_bytes(&self) -> u64 {
        self.buffer_bytes.unwrap_or_else(|| {
            bdp_buffer_bytes(mbps(self.bdp_nominal_mbps), ms(self.bdp_owd_ms), self.buffer_bdp_pct)
        })
    }

    pub fn aqm_config(&self) -> AqmConfig {
        let cap = self.capacity_bytes() as f64;
        let red = RedConfig {
            min_th: cap * self.red_min_pct / 100.0,
            max_th: cap * self.red_max_pct / 100.0,
            p_max: self.red_p_max,
            w_q: self.red_w_q,
        };
        match self.aqm {
            AqmKind::Droptail => AqmConfig::DropTail,
            AqmKind::Red => AqmConfig::Red(red),
            AqmKind::Ared => {
                let mut a = AredConfig::with_default_targets(red);
                a.interval = ms(self.ared_interval_ms);
                AqmConfig::Ared(a)
            }
            AqmKind::Codel => AqmConfig::Codel(CodelConfig::new(ms(self.codel_target_ms), ms(self.codel_interval_ms))),
            AqmKind::L4s => {
                let mut l = L4sConfig::new(ms(self.l4s_low_ms), ms(self.l4s_high_ms));
                l.alpha = self.l4s_alpha;
                l.update_period = ms(self.l4s_period_ms);
                AqmConfig::L4s(l)
            }
        }
    }

    /// DropTail has nothing to mark with.
    pub fn effective_mode(&self) -> ActionMode {
        if self.aqm == AqmKind::Droptail {
            ActionMode::Drop
        } else {
            self.mode
        }
    }
}

impl Scenario {
    pub fn from_toml_str(src: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(src).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Relative trace and ladder paths are taken relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let ChannelSpec::Trace { path } = &mut self.channel {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        for f in std::iter::once(&mut self.flow).chain(self.flows.iter_mut()) {
            if let AppToml::Has { ladder: Some(p), .. } = &mut f.app {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn flow_list(&self) -> Vec<FlowTemplate> {
        if self.flows.is_empty() {
            vec![self.flow.clone(); self.num_flows]
        } else {
            self.flows.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.horizon_s > 0.0) {
            return bad(format!("horizon_s must be positive, got {}", self.horizon_s));
        }
        let flows = self.flow_list();
        if flows.is_empty() {
            return bad("at least one flow is required".into());
        }
        if !(self.output.sample_interval_ms > 0.0 && self.output.rate_window_ms > 0.0) {
            return bad("output intervals must be positive".into());
        }
        for (i, f) in flows.iter().enumerate() {
            let q = f.queue.as_ref().unwrap_or(&self.queue);
            if f.ecn && q.aqm == AqmKind::Droptail {
                return bad(format!("flow {i}: ecn = true needs an AQM, droptail cannot mark"));
            }
            if f.ecn && q.mode != ActionMode::Mark {
                return bad(format!("flow {i}: ecn = true requires queue mode = \"mark\""));
            }
            if f.mss == 0 {
                return bad(format!("flow {i}: mss must be positive"));
            }
            if q.capacity_bytes() < f.mss as u64 {
                return bad(format!("flow {i}: queue holds less than one packet"));
            }
            if let Err(e) = crate::queue::FlowQueue::new(
                crate::packet::FlowId(i as u32),
                q.capacity_bytes(),
                q.aqm_config(),
                q.effective_mode(),
                0,
            ) {
                return bad(e.to_string());
            }
            match &f.app {
                AppToml::Vbr { datarate_mbps, fps } => {
                    if let Err(e) = VbrSourceConfig::xr(datarate_mbps * 1e6, *fps).validate() {
                        return bad(format!("flow {i}: {e}"));
                    }
                }
                AppToml::Has {
                    max_buffer_s,
                    segment_s,
                    startup_s,
                    ..
                } => {
                    if !(*segment_s > 0.0 && max_buffer_s >= segment_s && startup_s <= max_buffer_s) {
                        return bad(format!(
                            "flow {i}: need 0 < segment_s <= max_buffer_s and startup_s <= max_buffer_s"
                        ));
                    }
                }
                AppToml::Bulk => {}
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form with the seed cleared.
    pub fn config_hash(&self) -> String {
        let mut s = self.clone();
        s.seed = 0;
        let v = serde_json::to_value(&s).expect("scenario serializes");
        let canon = serde_json::to_vec(&v).expect("json value serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_trace(&self) -> Result<ChannelTrace, ScenarioError> {
        let invalid = |e: crate::channel::ChannelError| ScenarioError::Invalid(e.to_string());
        match &self.channel {
            ChannelSpec::Constant {
                capacity_mbps,
                owd_ms,
                loss,
                max_harq_retx,
                harq_retx_delay_ms,
            } => ChannelTrace::new(vec![TraceSample {
                t: SimTime::ZERO,
                capacity_bps: mbps(*capacity_mbps),
                base_owd_us: (owd_ms * 1e3).round() as u64,
                mac_loss_prob: *loss,
                max_harq_retx: *max_harq_retx,
                harq_retx_delay_us: (harq_retx_delay_ms * 1e3).round() as u64,
            }])
            .map_err(invalid),
            ChannelSpec::LosNlos {
                los_capacity_mbps,
                nlos_capacity_mbps,
                los_s,
                nlos_s,
                los_loss,
                nlos_loss,
                owd_ms,
                max_harq_retx,
                harq_retx_delay_ms,
            } => synth_los_nlos(&LosNlosParams {
                los_capacity_bps: mbps(*los_capacity_mbps),
                nlos_capacity_bps: mbps(*nlos_capacity_mbps),
                los_duration_s: *los_s,
                nlos_duration_s: *nlos_s,
                los_loss_prob: *los_loss,
                nlos_loss_prob: *nlos_loss,
                base_owd_us: (owd_ms * 1e3).round() as u64,
                total_duration_s: self.horizon_s,
                max_harq_retx: *max_harq_retx,
                harq_retx_delay_us: (harq_retx_delay_ms * 1e3).round() as u64,
            })
            .map_err(invalid),
            ChannelSpec::Trace { path } => {
                let f = std::fs::File::open(path).map_err(|source| ScenarioError::Io {
                    path: path.clone(),
                    source,
                })?;
                load_trace(std::io::BufReader::new(f)).map_err(invalid)
            }
        }
    }

    pub fn world_config(&self) -> Result<WorldConfig, ScenarioError> {
        self.validate()?;
        let trace = self.build_trace()?;
        let mut flows = Vec::new();
        for f in self.flow_list() {
            let q = f.queue.as_ref().unwrap_or(&self.queue);
            let app = match &f.app {
                AppToml::Vbr { datarate_mbps, fps } => AppSpec::Vbr(VbrSourceConfig::xr(datarate_mbps * 1e6, *fps)),
                AppToml::Has {
                    abr,
                    max_buffer_s,
                    segment_s,
                    startup_s,
                    ladder,
                } => {
                    let ladder = match ladder {
                        None => Ladder::default(),
                        Some(p) => {
                            let file = std::fs::File::open(p).map_err(|source| ScenarioError::Io {
                                path: p.clone(),
                                source,
                            })?;
                            load_ladder(file).map_err(|e| ScenarioError::Invalid(format!("{}: {e}", p.display())))?
                        }
                    };
                    AppSpec::Has {
                        abr: *abr,
                        player: PlayerConfig {
                            max_buffer: SimTime::from_secs_f64(*max_buffer_s),
                            segment_duration: SimTime::from_secs_f64(*segment_s),
                            startup_threshold: SimTime::from_secs_f64(*startup_s),
                        },
                        ladder: Arc::new(ladder),
                    }
                }
                AppToml::Bulk => AppSpec::Bulk,
            };
            flows.push(FlowSpec {
                app,
                sender: SenderConfig {
                    mss: f.mss,
                    cc: f.cc,
                    ecn: f.ecn,
                    loss_detection: f.loss_detection,
                    hystart: f.hystart,
                    pacing: f.pacing,
                    rto_min: ms(f.rto_min_ms),
                    log_level: self.output.transport_log,
                    seed: self.seed,
                    ..SenderConfig::default()
                },
                queue_capacity: q.capacity_bytes(),
                aqm: q.aqm_config(),
                mode: q.effective_mode(),
                start: SimTime::from_secs_f64(f.start_s),
            });
        }
        Ok(WorldConfig {
            horizon: SimTime::from_secs_f64(self.horizon_s),
            seed: self.seed,
            trace,
            flows,
            sample_interval: ms(self.output.sample_interval_ms),
            rate_window: ms(self.output.rate_window_ms),
            log_queue_events: self.output.log_queue_events,
        })
    }
}

/// Reads a scenario file, or a preset when `target` names one and no such file exists.
pub fn load_scenario(target: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(target);
    if !path.exists() {
        if let Some(src) = presets::scenario_source(target) {
            return Scenario::from_toml_str(src);
        }
        if presets::sweep_source(target).is_some() {
            return Err(ScenarioError::Invalid(format!("{target} is a sweep preset; use `sweep`")));
        }
    }
    let src = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut s = Scenario::from_toml_str(&src).map_err(|e| match e {
        ScenarioError::Parse(m) => ScenarioError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })?;
    s.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(s)
}
