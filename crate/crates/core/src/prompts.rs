//! Prompt templates sent to the planner model. Placeholders look like
//! `{name}`; unknown placeholders are left untouched.
//!
//! Prompts are part of the request body, so editing a template changes the
//! cassette keys and requires re-recording.

pub const DECOMPOSE: &str = include_str!("../prompts/decompose.txt");
pub const IDENTIFY_FACTORS: &str = include_str!("../prompts/identify_factors.txt");
pub const GENERATE_PLAN: &str = include_str!("../prompts/generate_plan.txt");
pub const REFINE: &str = include_str!("../prompts/refine.txt");
pub const DESIGN_FLOOR_PLAN: &str = include_str!("../prompts/design_floor_plan.txt");
pub const SELECT_OBJECTS: &str = include_str!("../prompts/select_objects.txt");
pub const PROPOSE_RELATIONS: &str = include_str!("../prompts/propose_relations.txt");
pub const REVISE_RELATIONS: &str = include_str!("../prompts/revise_relations.txt");

pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
