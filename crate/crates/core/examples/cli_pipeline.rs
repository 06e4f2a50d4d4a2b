//! The command line in-process: generate, train, evaluate and report in a
//! temporary directory.

use gnum::cli;

fn main() {
    let dir = std::env::temp_dir().join("gnum-cli-pipeline");
    let d = |s: &str| dir.join(s).display().to_string();
    let steps: [Vec<String>; 4] = [
        vec!["gen".into(), "--out-dir".into(), d("gen")],
        vec!["train".into(), "--dataset".into(), d("gen/dataset.gnum.gz"), "--out-dir".into(), d("train")],
        vec![
            "eval".into(),
            "--model".into(),
            d("train/model.ckpt"),
            "--dataset".into(),
            d("gen/dataset.gnum.gz"),
            "--out-dir".into(),
            d("eval"),
        ],
        vec!["report".into(), d("eval"), "--out-dir".into(), d("report")],
    ];
    for step in steps {
        let mut argv = vec!["gnum".to_string(), "--preset".into(), "toy".into()];
        argv.extend(step);
        println!("gnum {}", argv[1..].join(" "));
        let code = cli::run(argv);
        if code != 0 {
            std::process::exit(code);
        }
    }
    print!("{}", std::fs::read_to_string(dir.join("report/comparison.csv")).unwrap_or_default());
}
