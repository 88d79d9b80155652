#[test]
fn year_2000_has_366_days() {
    assert_eq!(leapyear::days_in_year(2000), 366);
}

#[test]
fn year_1900_has_365_days() {
    assert_eq!(leapyear::days_in_year(1900), 365);
}
