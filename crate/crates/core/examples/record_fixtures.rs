//! Regenerates the Clean Living Room cassette and asset catalog.
//!
//! A scripted stand-in for the language model answers every request the
//! pipeline makes; the exchanges are recorded into `cassette.json` so the
//! pipeline and the tests can replay them offline.
//!
//! cargo run -p envgen --example record_fixtures [fixture_dir]

use std::path::PathBuf;

use serde_json::{json, Value};

use envgen::derivation::{derive, DEFAULT_MAX_ROUNDS};
use envgen::layout::SolverConfig;
use envgen::plan::{extract_paths, normalize, LogicalTrajectory};
use envgen::provider::{Provider, ProviderError, ProviderRequest, Recorder, RequestKind};
use envgen::scene::catalog::{embed, encode_vector, AssetRecord};
use envgen::scene::{build_environment, AssetCatalog, SceneContext, DEFAULT_REFINE_ROUNDS};
use envgen::task::TaskBundle;
use envgen::trajectory::{cartesian_trajectories, minimal_trajectory_selection};

const ASSETS: &[(&str, &str, [f64; 3])] = &[
    ("armchair_01", "an upholstered armchair", [0.9, 0.9, 0.85]),
    ("book_01", "a hardcover book", [0.2, 0.04, 0.25]),
    ("box_red_01", "a red plastic toy storage box", [0.6, 0.4, 0.4]),
    ("box_white_01", "a white plastic toy storage box", [0.6, 0.4, 0.4]),
    ("car_01", "a small toy car", [0.2, 0.1, 0.1]),
    ("doll_01", "a small fabric doll", [0.15, 0.3, 0.1]),
    ("lamp_01", "a tall floor lamp", [0.4, 1.6, 0.4]),
    ("mop_01", "a wet floor mop with a long handle", [0.3, 1.3, 0.3]),
    ("painting_01", "a framed landscape painting", [0.8, 0.6, 0.04]),
    ("plant_01", "a potted plant", [0.4, 0.9, 0.4]),
    ("shelf_01", "a narrow wooden bookshelf", [0.9, 1.8, 0.35]),
    ("sofa_01", "a three-seat grey fabric sofa", [2.0, 0.85, 0.9]),
    ("stain_01", "a dirty mark on the floor", [0.5, 0.005, 0.4]),
    ("table_01", "a low rectangular wooden coffee table", [1.1, 0.45, 0.6]),
    ("vase_01", "a ceramic vase", [0.15, 0.3, 0.15]),
    ("wipes_01", "a pack of wet wipes", [0.2, 0.06, 0.12]),
];

fn description(asset_id: &str) -> &'static str {
    ASSETS.iter().find(|a| a.0 == asset_id).map(|a| a.1).expect("known asset")
}

/// Answers pipeline requests for the fixture task.
struct ScriptedModel;

impl ScriptedModel {
    fn answer(&self, request: &ProviderRequest) -> Value {
        let body = &request.body;
        match request.kind {
            RequestKind::Decompose => json!({"subtasks": [
                {"id": "toy", "summary": "Put a toy lying on the floor into the matching toy box."},
                {"id": "book", "summary": "Put a book lying on the floor onto the sofa."},
                {"id": "stain", "summary": "Clean the dirty mark on the floor with wipes or the mop."}
            ]}),
            RequestKind::IdentifyFactors => match body["subtask"]["id"].as_str() {
                Some("toy") => json!({"factors": [
                    {"name": "toy_presence", "domain": ["YES", "NO"], "aliases": ["toy on the floor"]},
                    {"name": "toy_type", "domain": ["doll", "other types"], "aliases": ["type of the toy"]}
                ]}),
                Some("book") => json!({"factors": [
                    {"name": "book_presence", "domain": ["YES", "NO"], "aliases": ["book on the floor"]}
                ]}),
                _ => json!({"factors": [
                    {"name": "wipes_presence", "domain": ["YES", "NO"], "aliases": ["wet wipe on the table"]}
                ]}),
            },
            RequestKind::GeneratePlan => match body["subtask"]["id"].as_str() {
                Some("toy") => json!({"There is a toy on the floor?": {
                    "YES": {"What is the type of the toy on the floor?": {
                        "doll": "Place the toy in the red box.",
                        "other types": "Place the toy in the white box."
                    }},
                    "NO": "Do nothing."
                }}),
                Some("book") => json!({"There is a book on the floor?": {
                    "YES": "Place the book on the sofa.",
                    "NO": "Do nothing."
                }}),
                _ => json!({"There is a wet wipe on the table?": {
                    "YES": "Clean stain with the wet wipe.",
                    "NO": "Clean stain with the wet mop."
                }}),
            },
            RequestKind::Refine => body["previous"].clone(),
            RequestKind::DesignFloorPlan => json!({
                "rooms": [{
                    "id": "living_room",
                    "vertices": [[0.0, 0.0], [5.0, 0.0], [5.0, 4.0], [0.0, 4.0]],
                    "height": 2.7,
                    "floor_color": "light oak",
                    "floor_material": "wood",
                    "wall_color": "white",
                    "wall_material": "plaster"
                }],
                "doorways": [{
                    "id": "front_door", "door_type": "hinged", "width": 0.9, "height": 2.1,
                    "state": "closed", "connects": ["living_room", "exterior"], "wall": "south"
                }],
                "windows": [{
                    "id": "north_window", "room": "living_room", "orientation": "north",
                    "window_type": "sliding", "state": "closed", "width": 1.2, "height": 1.2, "sill_height": 0.9
                }]
            }),
            RequestKind::SelectObjects => self.objects(body),
            RequestKind::ProposeRelations => self.relations(body, true),
            RequestKind::ReviseRelations => {
                let objects: Vec<String> = body["previous"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|r| r["subject"].as_str().map(String::from))
                    .collect();
                let present = json!({"objects": objects.iter().map(|id| json!({"id": id})).collect::<Vec<_>>()});
                self.relations(&present, false)
            }
        }
    }

    fn steps(body: &Value) -> Vec<(String, String)> {
        body["trajectory"]["steps"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|s| (normalize(s["query"].as_str().unwrap_or("")), normalize(s["response"].as_str().unwrap_or(""))))
            .collect()
    }

    fn objects(&self, body: &Value) -> Value {
        let steps = Self::steps(body);
        let says = |query: &str, response: &str| steps.iter().any(|(q, r)| q.contains(query) && r == response);
        let object = |id: &str, asset: &str, category: &str, mass: &str, attributes: Value| {
            json!({"id": id, "description": description(asset), "room": "living_room",
                   "category": category, "mass_category": mass, "attributes": attributes})
        };
        let mut objects = vec![
            object("sofa", "sofa_01", "task_related", "heavy_freestanding", json!({})),
            object("table", "table_01", "task_related", "heavy_freestanding", json!({})),
            object("wet_mop", "mop_01", "task_related", "light", json!({})),
            object("red_box", "box_red_01", "task_related", "light", json!({"color": "red", "open_state": "opened"})),
            object("white_box", "box_white_01", "task_related", "light", json!({"color": "white", "open_state": "opened"})),
            object("stain", "stain_01", "task_related", "light", json!({"status": "dirty"})),
        ];
        if says("toy on the floor", "yes") {
            let doll = says("type of the toy", "doll");
            let (asset, kind) = if doll { ("doll_01", "doll") } else { ("car_01", "toy car") };
            objects.push(object("toy", asset, "task_related", "light", json!({"toy_type": kind})));
        }
        if says("book on the floor", "yes") {
            objects.push(object("book", "book_01", "task_related", "light", json!({"read_state": "unread"})));
        }
        if says("wet wipe on the table", "yes") {
            objects.push(object("wet_wipes", "wipes_01", "task_related", "light", json!({})));
        }
        objects.push(object("armchair", "armchair_01", "enrichment", "heavy_freestanding", json!({})));
        objects.push(object("floor_lamp", "lamp_01", "enrichment", "light", json!({})));
        objects.push(object("plant", "plant_01", "enrichment", "light", json!({})));
        objects.push(object("vase", "vase_01", "enrichment", "light", json!({})));
        objects.push(object("painting", "painting_01", "enrichment", "wall_mountable", json!({})));
        json!({ "objects": objects })
    }

    /// The first proposal puts the vase on both the table and the sofa; the
    /// revision keeps it on the table.
    fn relations(&self, body: &Value, first: bool) -> Value {
        let ids: Vec<&str> = body["objects"].as_array().into_iter().flatten().filter_map(|o| o["id"].as_str()).collect();
        let has = |id: &str| ids.contains(&id);
        let rel = |kind: &str, subject: &str, reference: Option<&str>| match reference {
            Some(r) => json!({"kind": kind, "subject": subject, "reference": r}),
            None => json!({"kind": kind, "subject": subject}),
        };
        let mut out = vec![
            rel("edge", "sofa", None),
            rel("in_front_of", "table", Some("sofa")),
            rel("near", "wet_mop", Some("table")),
            rel("side_of", "red_box", Some("sofa")),
            rel("near", "white_box", Some("red_box")),
            rel("near", "stain", Some("table")),
        ];
        if has("toy") {
            out.push(rel("near", "toy", Some("sofa")));
        }
        if has("book") {
            out.push(rel("near", "book", Some("table")));
        }
        if has("wet_wipes") {
            out.push(rel("on_top_of", "wet_wipes", Some("table")));
        }
        out.push(rel("near", "armchair", Some("table")));
        out.push(rel("side_of", "floor_lamp", Some("sofa")));
        out.push(rel("edge", "plant", None));
        out.push(rel("on_top_of", "vase", Some("table")));
        if first {
            out.push(rel("on_top_of", "vase", Some("sofa")));
        }
        out.push(rel("mounted_on_wall", "painting", None));
        json!({ "relations": out })
    }
}

impl Provider for ScriptedModel {
    fn complete(&mut self, request: &ProviderRequest) -> Result<String, ProviderError> {
        Ok(serde_json::to_string(&self.answer(request)).expect("json"))
    }
}

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/clean_living_room"));
    let records: Vec<AssetRecord> = ASSETS
        .iter()
        .map(|(id, text, bbox)| AssetRecord {
            asset_id: id.to_string(),
            description: text.to_string(),
            vector: encode_vector(&embed(text)),
            bbox: *bbox,
        })
        .collect();
    std::fs::write(dir.join("catalog.json"), serde_json::to_string_pretty(&records).expect("json") + "\n").expect("write catalog");
    let catalog = AssetCatalog::from_records(records).expect("catalog");

    let bundle = TaskBundle::load(&dir.join("task.json")).expect("task bundle");
    let mut recorder = Recorder::new(ScriptedModel);
    let derived = derive(&mut recorder, &bundle.task, DEFAULT_MAX_ROUNDS).expect("derivation");
    let sets: Vec<_> = derived.trees.iter().map(extract_paths).collect();
    let full: Vec<LogicalTrajectory> = cartesian_trajectories(&sets).expect("paths").collect();
    let minimal = minimal_trajectory_selection(&full);

    let solver = SolverConfig::default();
    let ctx = SceneContext { task: &bundle.task, schema: &bundle.schema, catalog: &catalog, solver: &solver, refine_rounds: DEFAULT_REFINE_ROUNDS };
    // Every trajectory is recorded so tests can build environments beyond the minimal set.
    let mut ordered = minimal.clone();
    ordered.extend(full.iter().filter(|t| !minimal.contains(t)).cloned());
    for (i, trajectory) in ordered.iter().enumerate() {
        let env = build_environment(&mut recorder, &ctx, trajectory, &format!("env_{i:02}"));
        match env {
            Ok(_) => println!("recorded {}", trajectory.trajectory_id),
            Err(e) => panic!("{}: {e}", trajectory.trajectory_id),
        }
    }
    let (_, cassette) = recorder.into_parts();
    cassette.save(&dir.join("cassette.json")).expect("save cassette");
    println!("{} exchanges", cassette.records.len());
}
