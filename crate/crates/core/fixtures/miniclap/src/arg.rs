#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arg {
    pub name: String,
    pub long: Option<String>,
    pub required: bool,
    pub default_value: Option<String>,
}

impl Arg {
    pub fn new(name: &str) -> Self {
        Arg {
            name: name.to_owned(),
            long: None,
            required: false,
            default_value: None,
        }
    }

    pub fn long(mut self, long: &str) -> Self {
        self.long = Some(long.to_owned());
        self
    }

    pub fn required(mut self, yes: bool) -> Self {
        self.required = yes;
        self
    }

    pub fn default_value(mut self, value: &str) -> Self {
        self.default_value = Some(value.to_owned());
        self
    }

    pub fn is_positional(&self) -> bool {
        self.long.is_none()
    }

    /// How the argument is shown in a usage line.
    pub fn usage_form(&self) -> String {
        match &self.long {
            Some(long) => format!("--{long} <{}>", self.name),
            None => format!("<{}>", self.name),
        }
    }
}
