#![allow(dead_code)]

use std::path::Path;

use parbci::sim::ParSpec;
use parbci_hub::log::{read_log, Body, Record};
use parbci_hub::SessionConfig;

pub fn config(out: &Path, duration: f64) -> SessionConfig {
    let mut cfg = SessionConfig::default();
    cfg.session_hub.output_dir = out.to_path_buf();
    cfg.sim_signals.duration = duration;
    cfg
}

/// Two PARs: the first while "Call caregiver" is highlighted on the root
/// menu, the second on the confirmation's first entry.
pub fn caregiver_config(out: &Path) -> SessionConfig {
    let mut cfg = config(out, 20.0);
    cfg.sim_signals.pupil.schedule = vec![
        ParSpec {
            onset: 11.0,
            duration: 1.0,
            depth: 0.3,
        },
        ParSpec {
            onset: 12.6,
            duration: 1.0,
            depth: 0.3,
        },
    ];
    cfg
}

pub fn records(path: &Path) -> Vec<Record> {
    let f = std::io::BufReader::new(std::fs::File::open(path).unwrap());
    read_log(f).unwrap().into_iter().map(|(_, r)| r).collect()
}

pub fn kind(b: &Body) -> String {
    let v = serde_json::to_value(b).unwrap();
    v["kind"].as_str().unwrap().to_string()
}

/// `(t, ui_state or action as JSON)` in log order.
pub fn ui_trace(rs: &[Record]) -> Vec<String> {
    rs.iter()
        .filter(|r| matches!(r.body, Body::UiState { .. } | Body::Action { .. }))
        .map(|r| format!("{} {}", r.t, serde_json::to_string(&r.body).unwrap()))
        .collect()
}

/// Session time from the root menu highlighting `item` to its action.
pub fn selection_latency(rs: &[Record], item: &str, action: &str) -> Option<f64> {
    let mut highlighted_at = None;
    for r in rs {
        match &r.body {
            Body::UiState {
                view,
                highlighted,
                entries,
                ..
            } => {
                let on_item = entries.get(*highlighted).is_some_and(|e| e.id == item);
                if *view == parbci::ui::View::MainMenu {
                    highlighted_at = on_item.then_some(highlighted_at.unwrap_or(r.t));
                }
            }
            Body::Action { action: a } => {
                let name = serde_json::to_value(a).unwrap()["action"]
                    .as_str()
                    .unwrap()
                    .to_string();
                if name == action {
                    return highlighted_at.map(|t0| r.t - t0);
                }
            }
            _ => {}
        }
    }
    None
}
