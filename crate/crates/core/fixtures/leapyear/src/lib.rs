pub fn is_leap(year: u32) -> bool {
    year % 4 == 0 && year % 100 != 0
}

pub fn days_in_year(year: u32) -> u32 {
    if is_leap(year) {
        366
    } else {
        365
    }
}
