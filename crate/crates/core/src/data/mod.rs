//! Price data, scenario reduction and schedule files.

pub mod kmedoids;
pub mod prices;
pub mod schedule;

pub use kmedoids::{kmedoids, load_scenarios, save_scenarios, Clustering, PriceScenario};
pub use prices::{load_prices, synthetic_prices, DailyProfile, PriceFormat, PriceHistory, SyntheticPrices, HOURS};
pub use schedule::{ProfitBreakdown, ScheduleFile, SCHEDULE_SCHEMA};
