#[test]
fn wrong_argument_type() {
    assert_eq!(leapyear::days_in_year("2000"), 366);
}
