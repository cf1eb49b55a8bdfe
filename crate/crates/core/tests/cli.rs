use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{GrayImage, Luma, Rgb, RgbImage};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dpconv"));
    c.env_remove("DPCONV_OUT_DIR");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn dpconv")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn pngs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    v.sort();
    v
}

const SMALL_EXPERIMENT: &str = "# small run\nper_bucket = 4\nheight = 64\nwidth = 64\nseed = 7\n";

#[test]
fn maskgen_writes_count_files_deterministically() {
    let t = TempDir::new().unwrap();
    for sub in ["a", "b"] {
        let o = run(&["maskgen", "--ratio", "0.3", "--count", "3", "--height", "48", "--width", "40", "--seed", "5", "--out-dir", sub], t.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = pngs(&t.path().join("a"));
    let names: Vec<String> = a.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["mask_00000.png", "mask_00001.png", "mask_00002.png"]);
    for p in &a {
        let q = t.path().join("b").join(p.file_name().unwrap());
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
        let img = image::open(p).unwrap();
        assert_eq!(img.color(), image::ColorType::L8);
        let g = img.into_luma8();
        assert_eq!(g.dimensions(), (40, 48));
        assert!(g.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));
    }
}

#[test]
fn maskgen_reports_mean_ratio() {
    let t = TempDir::new().unwrap();
    let o = run(&["maskgen", "--ratio", "0.35", "--count", "100", "--out-dir", "m"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let mean: f64 = out
        .split("mean hole ratio ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.32..=0.38).contains(&mean), "{out}");
}

#[test]
fn usage_errors_exit_one() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(&["maskgen", "--ratio", "0.95"], t.path())), 1);
    assert_eq!(code(&run(&["maskgen", "--ratio", "0.3", "--bogus"], t.path())), 1);
    assert_eq!(code(&run(&["gradcheck", "--trials", "0"], t.path())), 1);
    assert_eq!(code(&run(&["nonsense"], t.path())), 1);
    assert_eq!(code(&run(&["--help"], t.path())), 0);
}

#[test]
fn out_dir_comes_from_environment() {
    let t = TempDir::new().unwrap();
    let o = bin()
        .args(["maskgen", "--ratio", "0.2", "--count", "2", "--height", "32", "--width", "32"])
        .env("DPCONV_OUT_DIR", t.path().join("env"))
        .current_dir(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(pngs(&t.path().join("env/masks")).len(), 2);
}

#[test]
fn analyze_writes_deterministic_csv() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("exp.txt"), SMALL_EXPERIMENT).unwrap();
    for out in ["r1.csv", "r2.csv"] {
        let o = run(&["analyze", "--config", "exp.txt", "--out", out], t.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let csv = std::fs::read_to_string(t.path().join("r1.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(t.path().join("r2.csv")).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "stack,bucket_lo,bucket_hi,mean_layers,min_layers,max_layers,not_reached");
    assert_eq!(lines.len(), 13);
    assert!(lines[1].starts_with("pconv,0.00,0.10,"));
    assert!(lines[12].starts_with("dpconv,0.50,0.60,"));
    assert!(!csv.contains('\r'));
}

#[test]
fn analyze_cap_one_leaves_masks_unreached() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("exp.txt"), SMALL_EXPERIMENT).unwrap();
    let o = run(&["analyze", "--config", "exp.txt", "--cap", "1", "--out", "r.csv"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(t.path().join("r.csv")).unwrap();
    let high: Vec<usize> = csv
        .lines()
        .skip(1)
        .filter(|l| l.contains(",0.50,0.60,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(high.len(), 2);
    assert!(high.iter().all(|&n| n > 0));
}

#[test]
fn analyze_reports_line_of_malformed_file() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("bad.txt"), "cap = 4\n# fine\nheight 64\n").unwrap();
    let o = run(&["analyze", "--config", "bad.txt", "--out", "r.csv"], t.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.txt:3:"), "{}", stderr(&o));
    std::fs::write(t.path().join("bad2.txt"), "cap = 4\nstack.a = 3 3x\nstack.b = 3\n").unwrap();
    let o = run(&["analyze", "--config", "bad2.txt"], t.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad2.txt:2:"), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_and_detects_injected_fault() {
    let t = TempDir::new().unwrap();
    let o = run(&["gradcheck", "--trials", "2", "--seed", "3"], t.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    for op in ["dpconv", "attention", "pixel", "style", "tv", "adv_g", "adv_d"] {
        assert!(stdout(&o).lines().any(|l| l.starts_with(op)), "{op}");
    }
    let o = run(&["gradcheck", "--trials", "2", "--inject-fault", "tv"], t.path());
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).lines().any(|l| l.starts_with("tv") && l.ends_with("FAIL")));
}

#[test]
fn train_demo_zero_steps_writes_initial_checkpoint() {
    let t = TempDir::new().unwrap();
    let o = run(&["train-demo", "--steps", "0", "--size", "32", "--checkpoint", "out/model.ckpt"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(t.path().join("out/model.ckpt").exists());
    let log = std::fs::read_to_string(t.path().join("out/loss_log.csv")).unwrap();
    assert_eq!(log, "step,pixel,style,adv_g,adv_d,tv,total\n");
}

#[test]
fn train_demo_is_seeded_and_config_file_is_overridden_by_flags() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("train.txt"), "steps = 3\nsize = 32\nbatch = 2\nseed = 11\n").unwrap();
    for dir in ["a", "b"] {
        let ck = format!("{dir}/m.ckpt");
        let o = run(&["train-demo", "--config", "train.txt", "--steps", "2", "--checkpoint", &ck], t.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read(t.path().join("a/loss_log.csv")).unwrap();
    assert_eq!(a, std::fs::read(t.path().join("b/loss_log.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 3);
    assert_eq!(
        std::fs::read(t.path().join("a/m.ckpt")).unwrap(),
        std::fs::read(t.path().join("b/m.ckpt")).unwrap()
    );
    std::fs::write(t.path().join("bad.txt"), "steps = 3\nlearning_rate = 1\n").unwrap();
    let o = run(&["train-demo", "--config", "bad.txt"], t.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.txt:2:"));
    let o = run(&["train-demo", "--steps", "1", "--size", "30", "--checkpoint", "c/m.ckpt"], t.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

fn write_test_image(path: &Path, w: u32, h: u32) {
    RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7) as u8, (y * 5) as u8, ((x + y) * 3) as u8]))
        .save(path)
        .unwrap();
}

fn write_mask(path: &Path, w: u32, h: u32, hole: impl Fn(u32, u32) -> bool) {
    GrayImage::from_fn(w, h, |x, y| Luma([if hole(x, y) { 0 } else { 255 }]))
        .save(path)
        .unwrap();
}

#[test]
fn infer_round_trips_valid_pixels() {
    let t = TempDir::new().unwrap();
    let o = run(&["train-demo", "--steps", "0", "--size", "32", "--checkpoint", "m.ckpt"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    write_test_image(&t.path().join("in.png"), 32, 32);
    write_mask(&t.path().join("ones.png"), 32, 32, |_, _| false);
    write_mask(&t.path().join("holes.png"), 32, 32, |x, y| (8..20).contains(&x) && (10..16).contains(&y));

    let o = run(&["infer", "--checkpoint", "m.ckpt", "--image", "in.png", "--mask", "ones.png", "--out", "o1.png", "--composited"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let input = image::open(t.path().join("in.png")).unwrap().into_rgb8();
    let o1 = image::open(t.path().join("o1.png")).unwrap().into_rgb8();
    assert_eq!(o1, input);

    let o = run(&["infer", "--checkpoint", "m.ckpt", "--image", "in.png", "--mask", "holes.png", "--out", "o2.png", "--composited"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o2 = image::open(t.path().join("o2.png")).unwrap();
    assert_eq!(o2.color(), image::ColorType::Rgb8);
    let o2 = o2.into_rgb8();
    assert_eq!(o2.dimensions(), (32, 32));
    for (x, y, p) in o2.enumerate_pixels() {
        if !((8..20).contains(&x) && (10..16).contains(&y)) {
            assert_eq!(p, input.get_pixel(x, y));
        }
    }

    let o = run(&["infer", "--checkpoint", "m.ckpt", "--image", "in.png", "--mask", "holes.png", "--out", "o3.png"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(image::open(t.path().join("o3.png")).unwrap().into_rgb8().dimensions(), (32, 32));
}

#[test]
fn infer_rejects_bad_inputs() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(&["train-demo", "--steps", "0", "--size", "32", "--checkpoint", "m.ckpt"], t.path())), 0);
    write_test_image(&t.path().join("in.png"), 32, 32);
    write_mask(&t.path().join("small.png"), 16, 32, |_, _| false);
    let o = run(&["infer", "--checkpoint", "m.ckpt", "--image", "in.png", "--mask", "small.png", "--out", "o.png"], t.path());
    assert_eq!(code(&o), 2);
    assert!(!t.path().join("o.png").exists());

    let mut bytes = std::fs::read(t.path().join("m.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(t.path().join("bad.ckpt"), bytes).unwrap();
    write_mask(&t.path().join("ones.png"), 32, 32, |_, _| false);
    let o = run(&["infer", "--checkpoint", "bad.ckpt", "--image", "in.png", "--mask", "ones.png", "--out", "o.png"], t.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("checkpoint"), "{}", stderr(&o));
}

#[test]
fn metrics_on_identical_and_shifted_sets() {
    let t = TempDir::new().unwrap();
    for d in ["a", "b", "c"] {
        std::fs::create_dir(t.path().join(d)).unwrap();
    }
    for (i, v) in [40u8, 100, 200].iter().enumerate() {
        let name = format!("img{i}.png");
        RgbImage::from_pixel(24, 24, Rgb([*v; 3])).save(t.path().join("a").join(&name)).unwrap();
        RgbImage::from_pixel(24, 24, Rgb([*v; 3])).save(t.path().join("b").join(&name)).unwrap();
        RgbImage::from_pixel(24, 24, Rgb([v + 51; 3])).save(t.path().join("c").join(&name)).unwrap();
    }
    let o = run(&["metrics", "--a", "a", "--b", "b", "--out", "same.csv"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(t.path().join("same.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "name,l1_percent,psnr_db,ssim");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(&f[1..], ["0.000000", "inf", "1.000000"]);
    }
    assert!(lines[4].starts_with("mean,"));

    // shift of 51/255 = 0.2
    let o = run(&["metrics", "--a", "a", "--b", "c", "--out", "shift.csv"], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(t.path().join("shift.csv")).unwrap();
    for l in csv.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        assert!((f[1].parse::<f64>().unwrap() - 20.0).abs() < 1e-6, "{l}");
        assert!((f[2].parse::<f64>().unwrap() - 20.0 * 5f64.log10()).abs() < 1e-5, "{l}");
    }
}

#[test]
fn metrics_lists_mismatched_files() {
    let t = TempDir::new().unwrap();
    for d in ["a", "b"] {
        std::fs::create_dir(t.path().join(d)).unwrap();
    }
    let img = RgbImage::from_pixel(8, 8, Rgb([1, 2, 3]));
    img.save(t.path().join("a/shared.png")).unwrap();
    img.save(t.path().join("b/shared.png")).unwrap();
    img.save(t.path().join("a/only_a.png")).unwrap();
    img.save(t.path().join("b/only_b.png")).unwrap();
    let o = run(&["metrics", "--a", "a", "--b", "b", "--out", "m.csv"], t.path());
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("only_a.png") && err.contains("only_b.png"), "{err}");
    assert!(!err.contains("shared.png"));
}
