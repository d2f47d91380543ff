//! Exhaustive search over menu states.

use std::collections::{HashMap, HashSet, VecDeque};

use parbci::label;
use parbci::ui::{Mode, UiEvent, UiEventKind, UiFlow, UiState};

pub type Key = String;

/// Everything that influences future behaviour: the clock only matters
/// through the arrow's phase within the current dwell.
pub fn key(f: &UiFlow, s: &UiState) -> Key {
    let d = f.dwell(s.view);
    let phase = (((s.clock - s.ring_start) / d).fract() * 1e6).round() as i64;
    format!(
        "{:?}|{}|{:?}|{:?}|{:?}|{}|{:?}",
        s.view, s.highlighted, s.selection_origin, s.mode, s.resume, phase, s.shortcuts
    )
}

pub fn event(s: &UiState, kind: &UiEventKind) -> UiEvent {
    let timestamp = match kind {
        UiEventKind::Tick { dt } => s.clock + dt,
        _ => s.clock,
    };
    UiEvent {
        timestamp,
        kind: kind.clone(),
    }
}

pub fn navigation() -> Vec<UiEventKind> {
    vec![
        UiEventKind::Tick { dt: 0.5 },
        UiEventKind::Tick { dt: 1.0 },
        UiEventKind::ParTask,
    ]
}

pub fn mi_events() -> Vec<UiEventKind> {
    ["right_hand", "left_hand", "feet"]
        .iter()
        .map(|l| UiEventKind::Mi { label: label(l) })
        .collect()
}

/// Breadth-first search over event sequences up to `depth`, merging
/// behaviourally equal states. Returns reachable states and transitions.
pub fn explore(
    f: &UiFlow,
    start: UiState,
    alphabet: &[UiEventKind],
    depth: usize,
) -> (HashMap<Key, UiState>, HashSet<(Key, Key)>) {
    let mut seen = HashMap::from([(key(f, &start), start.clone())]);
    let mut edges = HashSet::new();
    let mut frontier = vec![start];
    for _ in 0..depth {
        let mut next = Vec::new();
        for s in &frontier {
            let k = key(f, s);
            for kind in alphabet {
                let out = f.on_event(s, &event(s, kind)).unwrap();
                let nk = key(f, &out.state);
                edges.insert((k.clone(), nk.clone()));
                if !seen.contains_key(&nk) {
                    seen.insert(nk, out.state.clone());
                    next.push(out.state);
                }
            }
        }
        frontier = next;
    }
    (seen, edges)
}

pub fn reaches_root(f: &UiFlow, s: &UiState) -> bool {
    let mut queue = VecDeque::from([(s.clone(), 0)]);
    let mut seen = HashSet::new();
    while let Some((s, d)) = queue.pop_front() {
        if s.is_root() {
            return true;
        }
        if d == 64 || !seen.insert(key(f, &s)) {
            continue;
        }
        for kind in [UiEventKind::Tick { dt: 0.5 }, UiEventKind::ParTask] {
            queue.push_back((f.on_event(&s, &event(&s, &kind)).unwrap().state, d + 1));
        }
    }
    false
}

pub fn starts(f: &UiFlow) -> Vec<UiState> {
    vec![
        UiState::new(),
        UiState::new().with_mode(Mode::Multimodal, f.config().shortcuts.clone()),
    ]
}
