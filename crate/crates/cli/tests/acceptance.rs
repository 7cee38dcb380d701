//! Acceptance run: every release criterion, one PASS/FAIL line each.
//!
//! Run with `cargo test -p panelwright-cli --test acceptance -- --nocapture`
//! to see the report.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use image::RgbaImage;
use panelwright_core::backends::codec::{decode, decode_region, tag48};
use panelwright_core::backends::{AssetRole, MockBackend};
use panelwright_core::cinematographer::AssetStore;
use panelwright_core::director::{all_targets, refine_entities, ElementDatabase, PromptSet, RecordRef, DEFAULT_WINDOW};
use panelwright_core::pipeline::{Pipeline, PipelineConfig, REFINED_FILE};
use panelwright_core::quality::{fit_aggd, niqe_score, PristineModel};
use panelwright_core::script_ir::{parse_screenplay, ProfileField, ScriptIR};
use panelwright_core::storyboard::{check_axis_of_action, Panel, Storyboard};
use panelwright_core::workspace::Workspace;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde_json::Value;

type Check = Result<String, String>;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Finished mock projects shared by several criteria.
struct Projects {
    dirs: Vec<tempfile::TempDir>,
    run_times: Vec<Duration>,
    ten: tempfile::TempDir,
}

impl Projects {
    fn all(&self) -> [&Path; 2] {
        [self.dirs[0].path(), self.ten.path()]
    }
}

fn cli_run(ws: &Path, script: &Path) -> Duration {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_panelwright"))
        .arg("-w")
        .arg(ws)
        .args(["run", "--mock", "--seed", "7"])
        .arg(script)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    start.elapsed()
}

fn projects() -> Projects {
    let script = fixtures().join("scripts/two_scenes.fountain");
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let run_times = dirs.iter().map(|d| cli_run(d.path(), &script)).collect();
    let ten = tempfile::tempdir().unwrap();
    Pipeline::new(ten.path(), PipelineConfig::mock(7))
        .unwrap()
        .run(&fixtures().join("scripts/ten_characters.fountain"), None)
        .unwrap();
    Projects { dirs, run_times, ten }
}

fn refined_ir(root: &Path) -> ScriptIR {
    serde_json::from_str(&std::fs::read_to_string(root.join(REFINED_FILE)).unwrap()).unwrap()
}

fn board(root: &Path) -> Storyboard {
    Storyboard::load(&root.join("board")).unwrap()
}

fn c1_deterministic_run(p: &Projects) -> Check {
    let slowest = p.run_times.iter().max().unwrap();
    ensure(*slowest < Duration::from_secs(30), format!("run took {slowest:?}"))?;
    let d: Vec<String> = p.dirs.iter().map(|d| Workspace::open(d.path()).unwrap().digest().unwrap()).collect();
    ensure(d[0] == d[1], format!("digests differ: {} vs {}", d[0], d[1]))?;
    Ok(format!("slowest run {:.1}s, digest {}", slowest.as_secs_f64(), &d[0][..12]))
}

fn c2_parser_f1() -> Check {
    let (mut hit, mut total) = (0usize, 0usize);
    for i in 1..=10 {
        let dir = fixtures().join("parser_corpus");
        let text = std::fs::read_to_string(dir.join(format!("page{i:02}.fountain"))).unwrap();
        let labels: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("page{i:02}.labels.json"))).unwrap()).unwrap();
        let ir = parse_screenplay(&text).map_err(|e| format!("page {i}: {e}"))?;
        let expected: BTreeSet<String> = labels["characters"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| format!("char:{}", c.as_str().unwrap()))
            .chain(labels["spots"].as_array().unwrap().iter().map(|s| format!("spot:{}", s.as_str().unwrap())))
            .chain(labels["segments"].as_array().unwrap().iter().map(|s| {
                format!("seg:{}|{}|{}|{}", s["scene"], s["speaker"].as_str().unwrap(), s["line"].as_str().unwrap(), s["parenthetical"])
            }))
            .collect();
        let predicted: Vec<String> = ir
            .characters
            .iter()
            .map(|c| format!("char:{}", c.id))
            .chain(ir.spots.iter().map(|s| format!("spot:{}", s.id)))
            .chain(ir.dialogues.iter().map(|d| {
                let paren = d.parenthetical.as_ref().map_or(Value::Null, |p| Value::String(p.clone()));
                format!("seg:{}|{}|{}|{}", d.scene, d.speaker_id, d.line, paren)
            }))
            .collect();
        hit += predicted.iter().filter(|p| expected.contains(*p)).count();
        total += predicted.len() + expected.len();
    }
    let f1 = 2.0 * hit as f64 / total as f64;
    ensure(f1 == 1.0, format!("F1 {f1:.4}"))?;
    Ok(format!("F1 1.0 over {} labeled items", total / 2))
}

fn c3_eight_views(p: &Projects) -> Check {
    let mut n = 0;
    for root in p.all() {
        let ir = refined_ir(root);
        let store = AssetStore::open(&root.join("assets")).unwrap();
        for c in &ir.characters {
            for x in 0..8u8 {
                let v = store.load(AssetRole::CharacterView, &c.id, Some(x)).map_err(|e| e.to_string())?;
                let prov = decode(&v.pixels).ok_or_else(|| format!("{} view {x} has no provenance", c.id))?;
                ensure(prov.view_index == Some(x) && v.view_index == Some(x), format!("{} view {x} mislabeled", c.id))?;
            }
            ensure(store.load(AssetRole::CharacterView, &c.id, Some(8)).is_err(), format!("{} has a ninth view", c.id))?;
            n += 1;
        }
        for panel in board(root).panels {
            ensure(panel.selections.iter().all(|s| s.view_index <= 7), format!("panel {} out of range", panel.index))?;
        }
    }
    Ok(format!("{n} characters with views 0..7"))
}

fn c4_axis(p: &Projects) -> Check {
    let mut panels = 0;
    for root in p.all() {
        let b = board(root);
        let report = check_axis_of_action(&b.panels);
        ensure(report.is_clean(), format!("{} violations", report.violations.len()))?;
        panels += b.panels.len();
    }
    let planted: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("axis/planted_violation.json")).unwrap()).unwrap();
    let planted: Vec<Panel> = serde_json::from_value(planted["panels"].clone()).unwrap();
    let found = check_axis_of_action(&planted).violations.len();
    ensure(found == 1, format!("planted fixture gave {found} violations"))?;
    Ok(format!("0 violations over {panels} panels, 1 on the planted fixture"))
}

fn c5_corner_blocks(p: &Projects) -> Check {
    let (mut ok, mut total) = (0, 0);
    for root in p.all() {
        for panel in board(root).panels {
            for sel in &panel.selections {
                total += 1;
                let Some(pl) = panel.placements.iter().find(|x| x.character_id == sel.character_id) else {
                    continue;
                };
                let prov = decode_region(&panel.image, pl.x as f64, pl.y as f64, pl.block_cell);
                if prov.is_some_and(|v| v.owner_tag == tag48(&sel.character_id) && v.view_index == Some(sel.view_index)) {
                    ok += 1;
                }
            }
        }
    }
    ensure(total > 0 && ok == total, format!("{ok}/{total} decoded"))?;
    Ok(format!("{ok}/{total} subjects decoded"))
}

fn c6_panel_count(p: &Projects) -> Check {
    let mut parts = Vec::new();
    for root in p.all() {
        let ir = refined_ir(root);
        let k = board(root).panel_count();
        let want = ir.dialogues.len() + ir.scenes.len();
        ensure(k == want, format!("{k} panels, expected {want}"))?;
        parts.push(format!("{}+{}={k}", ir.dialogues.len(), ir.scenes.len()));
    }
    Ok(parts.join(", "))
}

fn aggd_samples(rng: &mut ChaCha8Rng, n: usize, alpha: f64) -> Vec<f64> {
    let (bl, br) = (0.7, 1.3);
    let g = Gamma::new(1.0 / alpha, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let m = g.sample(rng).powf(1.0 / alpha);
            if rng.gen_bool(bl / (bl + br)) {
                -bl * m
            } else {
                br * m
            }
        })
        .collect()
}

fn c7_aggd() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut got = Vec::new();
    for alpha in [0.5, 1.0, 2.0, 4.0] {
        let (a, ..) = fit_aggd(&aggd_samples(&mut rng, 100_000, alpha)).map_err(|e| e.to_string())?;
        ensure((a - alpha).abs() <= 0.1 * alpha, format!("alpha {alpha} fitted as {a:.3}"))?;
        got.push(format!("{a:.3}"));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    for sd in [0.5, 4.0] {
        let x: Vec<f64> = (0..100_000).map(|_| sd * normal.sample(&mut rng)).collect();
        let (a, ..) = fit_aggd(&x).map_err(|e| e.to_string())?;
        ensure((a - 2.0).abs() <= 0.2, format!("gaussian fitted as {a:.3}"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(5), format!("took {t:?}"))?;
    Ok(format!("fitted {} in {:.2}s", got.join(", "), t.as_secs_f64()))
}

fn blur(img: &RgbaImage, sigma: f64) -> RgbaImage {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let ks: f64 = k.iter().sum();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let pass = |src: &[[f64; 3]], horizontal: bool| -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for (t, kv) in k.iter().enumerate() {
                    let o = t as i64 - r;
                    let (sx, sy) = if horizontal { ((x + o).clamp(0, w - 1), y) } else { (x, (y + o).clamp(0, h - 1)) };
                    let p = src[(sy * w + sx) as usize];
                    for c in 0..3 {
                        acc[c] += kv * p[c];
                    }
                }
                out[(y * w + x) as usize] = acc.map(|v| v / ks);
            }
        }
        out
    };
    let src: Vec<[f64; 3]> = img.pixels().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
    let out = pass(&pass(&src, true), false);
    RgbaImage::from_fn(img.width(), img.height(), |x, y| {
        let v = out[(y as i64 * w + x as i64) as usize];
        image::Rgba([v[0].round() as u8, v[1].round() as u8, v[2].round() as u8, 255])
    })
}

fn add_noise(img: &RgbaImage, sigma: f64, rng: &mut ChaCha8Rng) -> RgbaImage {
    let n = Normal::new(0.0, sigma).unwrap();
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in 0..3 {
            p[c] = (p[c] as f64 + n.sample(rng)).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn c8_niqe_degradation() -> Check {
    let model = PristineModel::shipped();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures().join("niqe/photos"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    ensure(paths.len() == 5, format!("{} photos", paths.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rows = Vec::new();
    for path in &paths {
        let img = image::open(path).unwrap().to_rgba8();
        let score = |i: &RgbaImage| niqe_score(i, &model).map_err(|e| e.to_string());
        let (base, b, n) = (score(&img)?, score(&blur(&img, 3.0))?, score(&add_noise(&img, 25.5, &mut rng))?);
        let name = path.file_stem().unwrap().to_string_lossy();
        ensure(b > base && n > base, format!("{name}: clean {base:.2}, blur {b:.2}, noise {n:.2}"))?;
        rows.push(format!("{base:.2}->{b:.2}/{n:.2}"));
    }
    Ok(format!("clean->blur/noise {}", rows.join(" ")))
}

const CUES: &[(&str, &str)] = &[
    ("MAYOR GRANT", "mayor-grant"),
    ("GRANT", "grant"),
    ("TOM", "tom"),
    ("OLD TOM (V.O.)", "old-tom"),
    ("DR. VOSS", "dr-voss"),
    ("MAYOR GRANT", "mayor-grant"),
    ("CAPTAIN REYES", "captain-reyes"),
    ("NURSE VOSS", "nurse-voss"),
    ("DR. VOSS", "dr-voss"),
    ("REYES", "reyes"),
    ("THE HARBOUR MASTER", "the-harbour-master"),
    ("MARISOL", "marisol"),
    ("TOM", "tom"),
    ("OLD TOM", "old-tom"),
    ("CAPTAIN REYES", "captain-reyes"),
    ("GRANT", "grant"),
    ("MAYOR GRANT (CONT'D)", "mayor-grant"),
    ("THE HARBOUR MASTER", "the-harbour-master"),
];

fn c9_retrieval(p: &Projects) -> Check {
    let db = ElementDatabase::from_ir(&refined_ir(p.ten.path()));
    ensure(db.characters.len() == 10, format!("{} characters", db.characters.len()))?;
    ensure(db.dialogues.len() == CUES.len(), format!("{} segments", db.dialogues.len()))?;
    let mut hits = 0;
    for (seg, (cue, want)) in db.dialogues.iter().zip(CUES) {
        let top = db.lookup(cue).into_iter().next().map(|m| m.record);
        let ctx = db.retrieve_context(seg.id, DEFAULT_WINDOW).map_err(|e| e.to_string())?;
        if top == Some(RecordRef::Character(want.to_string())) && ctx.speaker.id == *want {
            hits += 1;
        }
    }
    ensure(hits == CUES.len(), format!("{hits}/{} at rank 1", CUES.len()))?;
    Ok(format!("{hits}/{} segments at rank 1", CUES.len()))
}

fn c10_clip_t(p: &Projects) -> Check {
    let mut parts = Vec::new();
    for root in p.all() {
        let report: Value = serde_json::from_str(&std::fs::read_to_string(root.join("eval/report.json")).unwrap()).unwrap();
        let (m, s) = (report["mean_clip_t"].as_f64(), report["shuffled_clip_t"].as_f64());
        let (Some(m), Some(s)) = (m, s) else {
            return Err("report lacks CLIP-T means".into());
        };
        ensure(m > s, format!("matched {m:.4} vs shuffled {s:.4}"))?;
        parts.push(format!("{m:.4} > {s:.4}"));
    }
    Ok(format!("matched > shuffled: {}", parts.join(", ")))
}

const NAMES: &[&str] = &["ANNA", "BORIS", "CLEO", "DMITRI", "EVE", "FARID"];
const FACTS: &[(ProfileField, &str, &[&str])] = &[
    (ProfileField::AgeBand, "{name}, {v}, waits.", &["early thirties", "late twenties", "mid forties"]),
    (ProfileField::Build, "{name} looks {v}.", &["slender", "stocky", "wiry"]),
    (ProfileField::Clothing, "{name} sits wearing a {v}.", &["red dress", "navy coat", "grey suit"]),
    (ProfileField::Hair, "{name} has {v}.", &["short dark hair", "long grey hair", "curly red hair"]),
];

fn c11_refinement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let prompts = PromptSet::default();
    let mut planted_total = 0;
    for run in 0..50 {
        let mut names = NAMES.to_vec();
        names.shuffle(&mut rng);
        let names = &names[..rng.gen_range(2..=4)];
        let mut text = String::from("INT. WAITING ROOM - DAY\n\n");
        let mut planted = Vec::new();
        for name in names {
            let mut facts = Vec::new();
            for (field, template, pool) in FACTS {
                if rng.gen_bool(0.5) {
                    let v = *pool.choose(&mut rng).unwrap();
                    text.push_str(&template.replace("{name}", name).replace("{v}", v));
                    text.push(' ');
                    facts.push((*field, v));
                }
            }
            text.push_str(&format!("\n\n{name}\nIs this the right room?\n\n"));
            planted.push(facts);
        }
        let ir = parse_screenplay(&text).map_err(|e| format!("run {run}: {e}"))?;
        let backend = MockBackend::new(rng.gen());
        let rounds = rng.gen_range(1..=3);
        let (out, _) = refine_entities(&ir, &all_targets(&ir), rounds, &prompts, &backend, &mut Vec::new())
            .map_err(|e| format!("run {run}: {e}"))?;
        for (i, facts) in planted.iter().enumerate() {
            let c = &out.characters[i];
            for (f, v) in facts {
                ensure(c.refined_profile.get(*f) == *v, format!("run {run}: {} {} altered", c.id, f.key()))?;
                planted_total += 1;
            }
        }
        for (b, a) in ir.characters.iter().zip(&out.characters) {
            for f in ProfileField::ALL {
                let old = b.refined_profile.get(f);
                if !old.trim().is_empty() {
                    ensure(a.refined_profile.get(f) == old, format!("run {run}: {} {} changed", a.id, f.key()))?;
                }
            }
        }
    }
    Ok(format!("50 runs, {planted_total} grounded values kept"))
}

fn attempt(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

#[test]
fn acceptance() {
    let p = projects();
    let results: Vec<(&str, Check)> = vec![
        ("deterministic mock run under 30 s", attempt(|| c1_deterministic_run(&p))),
        ("parser F1 on the labeled corpus", attempt(c2_parser_f1)),
        ("eight views per character", attempt(|| c3_eight_views(&p))),
        ("axis of action", attempt(|| c4_axis(&p))),
        ("corner blocks identify subjects", attempt(|| c5_corner_blocks(&p))),
        ("panel count", attempt(|| c6_panel_count(&p))),
        ("AGGD shape recovery", attempt(c7_aggd)),
        ("NIQE rises under degradation", attempt(c8_niqe_degradation)),
        ("speaker retrieval at rank 1", attempt(|| c9_retrieval(&p))),
        ("CLIP-T above shuffled baseline", attempt(|| c10_clip_t(&p))),
        ("refinement keeps grounded fields", attempt(c11_refinement)),
    ];
    println!();
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
