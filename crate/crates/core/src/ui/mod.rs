//! Scanning-menu interface: an arrow sweeps a ring of entries and a PAR
//! selects the highlighted one. Selections go through a confirmation view;
//! in multimodal mode motor-imagery shortcuts skip it. An external button
//! opens a three-answer overlay from anywhere.

mod unlock;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::TaskLabel;

pub use unlock::{active_shortcuts, session_passes, unlock_multimodal, UnlockThresholds};

#[derive(Debug, Error, PartialEq)]
pub enum UiError {
    #[error("invalid menu: {0}")]
    InvalidMenu(String),
    #[error("event at {timestamp} precedes the interface clock {clock}")]
    OutOfOrder { timestamp: f64, clock: f64 },
    #[error("tick duration {0} must be positive")]
    NonPositiveTick(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
    DontWantToAnswer,
}

impl Answer {
    pub const ALL: [Answer; 3] = [Answer::Yes, Answer::No, Answer::DontWantToAnswer];

    pub fn caption(self) -> &'static str {
        match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
            Answer::DontWantToAnswer => "Don't want to answer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    CallCaregiver,
    StartTraining,
    OpenSpeller,
    Custom { id: String },
    Answer { answer: Answer },
    Keystroke { key: char },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenuItem {
    pub id: String,
    pub caption: String,
    pub action: Action,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenuDef {
    pub items: Vec<MenuItem>,
    /// Seconds the arrow rests on each item.
    #[serde(default = "one")]
    pub dwell: f64,
}

impl Default for MenuDef {
    fn default() -> Self {
        let item = |id: &str, caption: &str, action| MenuItem {
            id: id.into(),
            caption: caption.into(),
            action,
        };
        Self {
            items: vec![
                item("speller", "Speller", Action::OpenSpeller),
                item("caregiver", "Call caregiver", Action::CallCaregiver),
                item("training", "Training", Action::StartTraining),
                item(
                    "comfort",
                    "I am uncomfortable",
                    Action::Custom {
                        id: "comfort".into(),
                    },
                ),
                item("rest", "Let me rest", Action::Custom { id: "rest".into() }),
            ],
            dwell: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UiConfig {
    pub menu: MenuDef,
    /// Dwell in the confirmation view; long enough for the pupil to recover
    /// between the two PARs of a selection.
    pub confirmation_dwell: f64,
    pub answers_dwell: f64,
    pub training_dwell: f64,
    pub speller_dwell: f64,
    pub speller_keys: Vec<char>,
    /// Motor-imagery task bound to a root item id.
    pub shortcuts: BTreeMap<TaskLabel, String>,
}

impl Default for UiConfig {
    fn default() -> Self {
        Self {
            menu: MenuDef::default(),
            confirmation_dwell: 2.0,
            answers_dwell: 2.0,
            training_dwell: 1.0,
            speller_dwell: 1.0,
            speller_keys: "AEIOU ".chars().collect(),
            shortcuts: BTreeMap::from([
                (
                    TaskLabel::new("right_hand").expect("valid label"),
                    "speller".to_string(),
                ),
                (
                    TaskLabel::new("left_hand").expect("valid label"),
                    "caregiver".to_string(),
                ),
            ]),
        }
    }
}

impl UiConfig {
    pub fn validate(&self) -> Result<(), UiError> {
        let bad = |m: String| Err(UiError::InvalidMenu(m));
        let items = &self.menu.items;
        if items.len() < 2 {
            return bad(format!(
                "the root menu needs at least 2 items, has {}",
                items.len()
            ));
        }
        for (i, it) in items.iter().enumerate() {
            if items[..i].iter().any(|o| o.id == it.id) {
                return bad(format!("item id `{}` is used twice", it.id));
            }
        }
        if !items.iter().any(|i| i.action == Action::CallCaregiver) {
            return bad("the root menu needs a caregiver-call item".into());
        }
        if !items.iter().any(|i| i.action == Action::StartTraining) {
            return bad("the root menu needs a training item".into());
        }
        let dwells = [
            self.menu.dwell,
            self.confirmation_dwell,
            self.answers_dwell,
            self.training_dwell,
            self.speller_dwell,
        ];
        if dwells.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("dwell times must be positive".into());
        }
        if self.speller_keys.is_empty() {
            return bad("the speller needs at least one key".into());
        }
        for (label, id) in &self.shortcuts {
            if !items.iter().any(|i| &i.id == id) {
                return bad(format!("shortcut `{label}` points at unknown item `{id}`"));
            }
        }
        Ok(())
    }

    fn item_index(&self, id: &str) -> Option<usize> {
        self.menu.items.iter().position(|i| i.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    MainMenu,
    Confirmation,
    SimpleAnswers,
    Training,
    Speller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ParOnly,
    Multimodal,
}

/// What the arrow returns to when the answers overlay closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resume {
    pub view: View,
    pub highlighted: usize,
    pub selection_origin: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiState {
    pub view: View,
    pub highlighted: usize,
    /// Root item behind the current confirmation, training or speller view.
    pub selection_origin: Option<usize>,
    pub mode: Mode,
    pub clock: f64,
    /// Clock time at which the arrow last restarted.
    pub ring_start: f64,
    pub resume: Option<Resume>,
    pub shortcuts: BTreeMap<TaskLabel, String>,
}

impl UiState {
    pub fn new() -> Self {
        Self {
            view: View::MainMenu,
            highlighted: 0,
            selection_origin: None,
            mode: Mode::ParOnly,
            clock: 0.0,
            ring_start: 0.0,
            resume: None,
            shortcuts: BTreeMap::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.view == View::MainMenu && self.resume.is_none()
    }

    /// Switches mode; shortcuts only stay bound in multimodal mode.
    pub fn with_mode(&self, mode: Mode, shortcuts: BTreeMap<TaskLabel, String>) -> Self {
        let mut s = self.clone();
        s.mode = mode;
        s.shortcuts = if mode == Mode::Multimodal {
            shortcuts
        } else {
            BTreeMap::new()
        };
        s
    }

    fn open(&mut self, view: View, highlighted: usize, origin: Option<usize>) {
        self.view = view;
        self.highlighted = highlighted;
        self.selection_origin = origin;
        self.ring_start = self.clock;
    }
}

impl Default for UiState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UiEventKind {
    ParTask,
    Mi { label: TaskLabel },
    ExternalButton,
    Tick { dt: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiEvent {
    pub timestamp: f64,
    #[serde(flatten)]
    pub kind: UiEventKind,
}

/// Why a motor-imagery event changed nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "notice", rename_all = "snake_case")]
pub enum Notice {
    MiIgnoredParOnly { label: TaskLabel },
    MiUnbound { label: TaskLabel },
    MiIgnoredInView { label: TaskLabel, view: View },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub state: UiState,
    pub actions: Vec<Action>,
    pub notice: Option<Notice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub id: String,
    pub caption: String,
}

pub const GO_BACK: &str = "go_back";

/// Target of a PAR on one entry of the current view.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Item(usize),
    GoBack,
    Answer(Answer),
    Key(char),
}

/// Menu configuration plus the pure transition functions.
#[derive(Debug, Clone, PartialEq)]
pub struct UiFlow {
    cfg: UiConfig,
}

impl UiFlow {
    pub fn new(cfg: UiConfig) -> Result<Self, UiError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &UiConfig {
        &self.cfg
    }

    pub fn dwell(&self, view: View) -> f64 {
        match view {
            View::MainMenu => self.cfg.menu.dwell,
            View::Confirmation => self.cfg.confirmation_dwell,
            View::SimpleAnswers => self.cfg.answers_dwell,
            View::Training => self.cfg.training_dwell,
            View::Speller => self.cfg.speller_dwell,
        }
    }

    fn ring(&self, s: &UiState) -> Vec<Slot> {
        let n = self.cfg.menu.items.len();
        match s.view {
            View::MainMenu => (0..n).map(Slot::Item).collect(),
            View::Confirmation => {
                let t = s.selection_origin.unwrap_or(s.highlighted);
                vec![
                    Slot::Item(t),
                    Slot::Item((t + n - 1) % n),
                    Slot::Item((t + 1) % n),
                    Slot::GoBack,
                ]
            }
            View::SimpleAnswers => Answer::ALL.iter().map(|a| Slot::Answer(*a)).collect(),
            View::Training => vec![Slot::GoBack],
            View::Speller => self
                .cfg
                .speller_keys
                .iter()
                .map(|k| Slot::Key(*k))
                .chain(std::iter::once(Slot::GoBack))
                .collect(),
        }
    }

    /// The entries of the current view in ring order.
    pub fn entries(&self, s: &UiState) -> Vec<Entry> {
        self.ring(s)
            .into_iter()
            .map(|slot| match slot {
                Slot::Item(i) => {
                    let it = &self.cfg.menu.items[i];
                    Entry {
                        id: it.id.clone(),
                        caption: it.caption.clone(),
                    }
                }
                Slot::GoBack => Entry {
                    id: GO_BACK.into(),
                    caption: "Go back".into(),
                },
                Slot::Answer(a) => Entry {
                    id: format!("answer_{}", a.caption()),
                    caption: a.caption().into(),
                },
                Slot::Key(k) => Entry {
                    id: format!("key_{k}"),
                    caption: k.to_string(),
                },
            })
            .collect()
    }

    /// Advances the arrow by the number of dwell boundaries crossed.
    pub fn tick(&self, s: &UiState, dt: f64) -> Result<UiState, UiError> {
        if !(dt > 0.0) {
            return Err(UiError::NonPositiveTick(dt));
        }
        Ok(self.advance_to(s, s.clock + dt))
    }

    /// Moves the clock to `t`; earlier times leave the state unchanged.
    pub fn advance_to(&self, s: &UiState, t: f64) -> UiState {
        let mut next = s.clone();
        if t <= s.clock {
            return next;
        }
        let d = self.dwell(s.view);
        let steps = ((t - s.ring_start) / d).floor() - ((s.clock - s.ring_start) / d).floor();
        let len = self.ring(s).len();
        next.highlighted = (s.highlighted + (steps as usize) % len) % len;
        next.clock = t;
        next
    }

    pub fn on_event(&self, s: &UiState, e: &UiEvent) -> Result<Outcome, UiError> {
        if e.timestamp < s.clock {
            return Err(UiError::OutOfOrder {
                timestamp: e.timestamp,
                clock: s.clock,
            });
        }
        let done = |state| {
            Ok(Outcome {
                state,
                actions: Vec::new(),
                notice: None,
            })
        };
        match &e.kind {
            UiEventKind::Tick { dt } => done(self.tick(s, *dt)?),
            UiEventKind::ParTask => Ok(self.par_task(self.advance_to(s, e.timestamp))),
            UiEventKind::ExternalButton => {
                let mut next = self.advance_to(s, e.timestamp);
                if next.view != View::SimpleAnswers {
                    next.resume = Some(Resume {
                        view: next.view,
                        highlighted: next.highlighted,
                        selection_origin: next.selection_origin,
                    });
                }
                next.open(View::SimpleAnswers, 0, None);
                done(next)
            }
            UiEventKind::Mi { label } => Ok(self.mi(self.advance_to(s, e.timestamp), label)),
        }
    }

    fn par_task(&self, mut s: UiState) -> Outcome {
        let slot = self.ring(&s)[s.highlighted];
        let mut actions = Vec::new();
        match (s.view, slot) {
            (View::MainMenu, Slot::Item(i)) => s.open(View::Confirmation, 0, Some(i)),
            (View::Confirmation, Slot::Item(i)) if s.highlighted == 0 => {
                actions.push(self.cfg.menu.items[i].action.clone());
                self.perform(&mut s, i);
            }
            (View::Confirmation, Slot::Item(i)) => s.open(View::Confirmation, 0, Some(i)),
            (View::Confirmation | View::Training | View::Speller, Slot::GoBack) => {
                let back = s.selection_origin.unwrap_or(0);
                s.open(View::MainMenu, back, None);
            }
            (View::SimpleAnswers, Slot::Answer(answer)) => {
                actions.push(Action::Answer { answer });
                let r = s.resume.take().unwrap_or(Resume {
                    view: View::MainMenu,
                    highlighted: 0,
                    selection_origin: None,
                });
                s.open(r.view, r.highlighted, r.selection_origin);
            }
            (View::Speller, Slot::Key(key)) => actions.push(Action::Keystroke { key }),
            _ => {}
        }
        Outcome {
            state: s,
            actions,
            notice: None,
        }
    }

    /// Moves to the view an item's action leads to.
    fn perform(&self, s: &mut UiState, item: usize) {
        match self.cfg.menu.items[item].action {
            Action::StartTraining => s.open(View::Training, 0, Some(item)),
            Action::OpenSpeller => s.open(View::Speller, 0, Some(item)),
            _ => s.open(View::MainMenu, item, None),
        }
    }

    fn mi(&self, mut s: UiState, label: &TaskLabel) -> Outcome {
        let notice = |n| Outcome {
            state: s.clone(),
            actions: Vec::new(),
            notice: Some(n),
        };
        if s.mode == Mode::ParOnly {
            return notice(Notice::MiIgnoredParOnly {
                label: label.clone(),
            });
        }
        if !matches!(s.view, View::MainMenu | View::Confirmation) {
            return notice(Notice::MiIgnoredInView {
                label: label.clone(),
                view: s.view,
            });
        }
        let Some(item) = s
            .shortcuts
            .get(label)
            .and_then(|id| self.cfg.item_index(id))
        else {
            return notice(Notice::MiUnbound {
                label: label.clone(),
            });
        };
        let action = self.cfg.menu.items[item].action.clone();
        self.perform(&mut s, item);
        Outcome {
            state: s,
            actions: vec![action],
            notice: None,
        }
    }
}
