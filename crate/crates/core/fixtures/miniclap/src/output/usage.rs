use crate::{App, ArgMatches};

/// Usage line shown under an error.
pub fn create_error_usage(app: &App, matches: &ArgMatches) -> String {
    let incls: Vec<String> = matches.explicit.clone();
    get_required_usage_from(app, &incls, matches)
}

/// Collect the arguments a valid invocation must contain and render them.
pub fn get_required_usage_from(app: &App, incls: &[String], matches: &ArgMatches) -> String {
    let mut required = Vec::new();
    for arg in &app.args {
        let needed = arg.required || arg.default_value.is_some();
        if needed || incls.contains(&arg.name) {
            let _ = matches.value_of(&arg.name);
            required.push(arg.usage_form());
        }
    }
    create_smart_usage(&app.name, &required)
}

pub fn create_smart_usage(bin_name: &str, used: &[String]) -> String {
    let mut usage = format!("USAGE:\n    {bin_name}");
    for u in used {
        usage.push(' ');
        usage.push_str(u);
    }
    usage
}
