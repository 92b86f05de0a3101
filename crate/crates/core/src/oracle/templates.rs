//! Prompt templates, one per oracle kind, with `{{kind}}`, `{{context}}` and
//! `{{schema}}` placeholders. Built-in copies are compiled in; a template
//! directory overrides them file by file so prompts can change without a
//! rebuild.

use std::collections::HashMap;
use std::path::Path;

use super::{canonical_json, schema, OracleError, OracleKind, OracleRequest};

fn builtin(kind: OracleKind) -> &'static str {
    match kind {
        OracleKind::InitNeeds => include_str!("../../templates/init_needs.txt"),
        OracleKind::NeedEffects => include_str!("../../templates/need_effects.txt"),
        OracleKind::AppraiseVisit => include_str!("../../templates/appraise_visit.txt"),
        OracleKind::PlanMandatory => include_str!("../../templates/plan_mandatory.txt"),
        OracleKind::FillMedium => include_str!("../../templates/fill_medium.txt"),
        OracleKind::LeisureCandidates => include_str!("../../templates/leisure_candidates.txt"),
        OracleKind::SelectArea => include_str!("../../templates/select_area.txt"),
        OracleKind::ExtractIntention => include_str!("../../templates/extract_intention.txt"),
        OracleKind::SelectVehicle => include_str!("../../templates/select_vehicle.txt"),
        OracleKind::Dispatch => include_str!("../../templates/dispatch.txt"),
        OracleKind::Converse => include_str!("../../templates/converse.txt"),
        OracleKind::Reflect => include_str!("../../templates/reflect.txt"),
        OracleKind::ReviseGoals => include_str!("../../templates/revise_goals.txt"),
    }
}

const BUILTIN_SYSTEM: &str = include_str!("../../templates/system.txt");

#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    system: Option<String>,
    overrides: HashMap<OracleKind, String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::default()
    }

    /// Reads `<kind>.txt` and `system.txt` from `dir` where present.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, OracleError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(OracleError::Config(format!(
                "template directory {} not found",
                dir.display()
            )));
        }
        let read = |name: &str| std::fs::read_to_string(dir.join(name)).ok();
        let mut overrides = HashMap::new();
        for kind in OracleKind::ALL {
            if let Some(text) = read(&format!("{kind}.txt")) {
                overrides.insert(kind, text);
            }
        }
        Ok(Self {
            system: read("system.txt"),
            overrides,
        })
    }

    pub fn system(&self) -> &str {
        self.system.as_deref().unwrap_or(BUILTIN_SYSTEM)
    }

    pub fn render(&self, request: &OracleRequest) -> String {
        let template = self
            .overrides
            .get(&request.kind)
            .map(String::as_str)
            .unwrap_or_else(|| builtin(request.kind));
        template
            .replace("{{kind}}", request.kind.as_str())
            .replace("{{schema}}", schema::example(request.kind))
            .replace("{{context}}", &canonical_json(&request.context))
    }
}

/// Recovers `(kind, context)` from a prompt rendered with the built-in
/// layout. Used by test servers that emulate a model.
pub fn parse_prompt(prompt: &str) -> Option<OracleRequest> {
    let kind_line = prompt
        .lines()
        .find_map(|l| l.strip_prefix("Request kind: "))?;
    let kind = OracleKind::parse(kind_line.trim())?;
    let start = prompt.find("<context>\n")? + "<context>\n".len();
    let end = prompt[start..].find("\n</context>")? + start;
    let context = serde_json::from_str(&prompt[start..end]).ok()?;
    Some(OracleRequest { kind, context })
}
