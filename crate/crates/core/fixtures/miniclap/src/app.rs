use std::collections::BTreeMap;

use crate::output::usage;
use crate::{Arg, Error, ErrorKind};

#[derive(Debug, Clone)]
pub struct App {
    pub name: String,
    pub args: Vec<Arg>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArgMatches {
    pub values: BTreeMap<String, String>,
    /// Names whose value was given on the command line.
    pub explicit: Vec<String>,
}

impl ArgMatches {
    pub fn value_of(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }
}

impl App {
    pub fn new(name: &str) -> Self {
        App {
            name: name.to_owned(),
            args: Vec::new(),
        }
    }

    pub fn arg(mut self, arg: Arg) -> Self {
        self.args.push(arg);
        self
    }

    pub fn try_get_matches_from<I, T>(&self, argv: I) -> Result<ArgMatches, Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let mut matches = ArgMatches::default();
        let mut positionals = self.args.iter().filter(|a| a.is_positional());
        let mut words = argv.into_iter().map(Into::into).skip(1);
        while let Some(word) = words.next() {
            if let Some(long) = word.strip_prefix("--") {
                let arg = self
                    .args
                    .iter()
                    .find(|a| a.long.as_deref() == Some(long))
                    .ok_or_else(|| self.error(ErrorKind::UnknownArgument, &format!("unexpected argument '--{long}'"), &matches))?;
                let value = words
                    .next()
                    .ok_or_else(|| self.error(ErrorKind::EmptyValue, &format!("'--{long}' needs a value"), &matches))?;
                matches.values.insert(arg.name.clone(), value);
                matches.explicit.push(arg.name.clone());
            } else {
                let arg = positionals
                    .next()
                    .ok_or_else(|| self.error(ErrorKind::UnknownArgument, &format!("unexpected value '{word}'"), &matches))?;
                matches.values.insert(arg.name.clone(), word);
                matches.explicit.push(arg.name.clone());
            }
        }
        for arg in &self.args {
            if let Some(default) = &arg.default_value {
                matches.values.entry(arg.name.clone()).or_insert_with(|| default.clone());
            }
        }
        let missing: Vec<String> = self
            .args
            .iter()
            .filter(|a| a.required && !matches.values.contains_key(&a.name))
            .map(|a| a.name.clone())
            .collect();
        if !missing.is_empty() {
            let message = format!("the following required arguments were not provided: {}", missing.join(", "));
            return Err(self.error(ErrorKind::MissingRequiredArgument, &message, &matches));
        }
        Ok(matches)
    }

    fn error(&self, kind: ErrorKind, message: &str, matches: &ArgMatches) -> Error {
        Error {
            kind,
            message: message.to_owned(),
            usage: usage::create_error_usage(self, matches),
        }
    }
}
