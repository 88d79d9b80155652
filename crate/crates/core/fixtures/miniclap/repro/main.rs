use miniclap::{App, Arg};

fn main() {
    let app = App::new("prog")
        .arg(Arg::new("input").required(true))
        .arg(Arg::new("mode").long("mode").default_value("fast"));
    let err = app.try_get_matches_from(["prog"]).unwrap_err();
    println!("{err}");
    assert!(
        !err.usage.contains("--mode"),
        "an argument with a default value is listed as required"
    );
}
