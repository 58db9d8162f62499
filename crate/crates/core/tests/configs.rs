use std::path::PathBuf;

use nvphoton::{Profile, RunConfig};

fn configs() -> Vec<(String, RunConfig)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut out: Vec<(String, RunConfig)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| {
            let cfg = RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p.file_name().unwrap().to_string_lossy().into_owned(), cfg)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn shipped_configs_load() {
    let names: Vec<String> = configs().into_iter().map(|(n, _)| n).collect();
    for panel in ["a", "b", "c", "d", "e", "f"] {
        assert!(names.contains(&format!("fig2{panel}.toml")), "{names:?}");
    }
    assert!(names.contains(&"caption.toml".to_string()));
    assert!(names.contains(&"high_q.toml".to_string()));
}

#[test]
fn panel_gates_lie_on_the_shared_grid() {
    for (name, cfg) in configs() {
        for profile in [Profile::Full, Profile::Fast] {
            let params: Vec<_> =
                cfg.sweep_points().iter().map(|pt| cfg.point_params(pt, profile).unwrap()).collect();
            let t_l = params.iter().map(|p| p.t_l).fold(f64::INFINITY, f64::min);
            let t_u = params.iter().map(|p| p.t_u).fold(0.0, f64::max);
            let step = cfg.grid_for(profile).spec(t_l, t_u).t_step();
            for p in &params {
                for t in [p.t_l, p.t_u] {
                    let k = (t - t_l) / step;
                    assert!((k - k.round()).abs() < 1e-6, "{name} {profile:?}: {t:e} is off the grid");
                }
            }
        }
    }
}
