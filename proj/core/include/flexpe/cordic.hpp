#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flexpe/fixedpoint.hpp"

namespace flexpe {

struct CordicConstants {
    static constexpr double Kh = 0.8281;
    static constexpr double inv_Kh = 1.2074;
    static constexpr double Kc = 1.6467;  // circular gain, kept for reference only
    static constexpr double hr_limit = 1.1182;
    static constexpr double lv_limit = 1.0;
    static constexpr double lr_limit = 7.968;
    static constexpr double max_norm = 5.5;
    // 1/Kh to double precision, the value actually loaded into X0.
    static constexpr double inv_Kh_exact = 1.2074970677630722;
};

enum class Direction { rotation, vectoring };

struct CordicMode {
    int m = 0;  // -1 hyperbolic, 0 linear
    Direction direction = Direction::rotation;

    friend constexpr bool operator==(CordicMode, CordicMode) = default;
};

inline constexpr CordicMode kHyperbolicRotation{-1, Direction::rotation};
inline constexpr CordicMode kLinearVectoring{0, Direction::vectoring};
inline constexpr CordicMode kLinearRotation{0, Direction::rotation};

// plain: i = 1, 2, 3, ...   repeated: i = 4, 13, 40 issued twice.
enum class HypSchedule { plain, repeated };

enum class AngleKind { hyperbolic, linear };

struct AngleTable {
    AngleKind kind = AngleKind::linear;
    QFormat format{};
    std::vector<int> shifts;          // shift amount i per step (negative = left shift)
    std::vector<FxpValue> entries;    // E for each step, quantized to `format`
    std::vector<double> exact;        // E before quantization

    std::size_t size() const { return shifts.size(); }
};

AngleTable hyperbolic_table(QFormat f, int steps, HypSchedule schedule = HypSchedule::repeated);
AngleTable linear_table(QFormat f, int steps, int first_shift = 1);
// Replace the angle constants of a table (used to replay printed tables).
AngleTable with_entries(AngleTable t, const std::vector<double>& values);
std::vector<int> hyperbolic_shifts(int steps, HypSchedule schedule);
std::string angle_table_csv(const AngleTable& t);

struct CordicState {
    FxpValue x, y, z;
    int stage_index = 1;  // next step to apply, 1-based into the table
    int last_d = 0;       // direction used by the most recent step (0 before any)
};

int direction_of(const CordicState& s, CordicMode mode);
CordicState cordic_step(const CordicState& s, CordicMode mode, const AngleTable& table);

// Checks the mode's convergence region, then applies n steps from stage 1.
CordicState run_iterative(const CordicState& init, CordicMode mode, const AngleTable& table, int n_stages);
// All intermediate states (element 0 is init, element k after k steps).
std::vector<CordicState> run_trace(const CordicState& init, CordicMode mode, const AngleTable& table, int n_stages);

struct SinhCosh {
    FxpValue cosh, sinh;
};

// Sign-magnitude front end: runs on |z| and restores the sign of sinh, so
// cosh is exactly even and sinh exactly odd.
SinhCosh hr_sinh_cosh(const FxpValue& z, int stages, HypSchedule schedule = HypSchedule::repeated);
FxpValue lv_divide(const FxpValue& num, const FxpValue& denom, int stages);
// Same engine without the precondition check; callers guarantee |num| <= denom.
FxpValue lv_divide_unchecked(const FxpValue& num, const FxpValue& denom, int stages);
inline constexpr int kLrGuardBits = 4;

// Linear rotation with `stages` steps at shifts -2, -1, 0, 1, ..., stages-3.
// Intermediate Y has kLrGuardBits more integer bits than the operands; only the
// result saturates.
FxpValue lr_mac(const FxpValue& a, const FxpValue& z, const FxpValue& acc, int stages);
FxpValue lr_mac_unchecked(const FxpValue& a, const FxpValue& z, const FxpValue& acc, int stages);

// Quantized convergence rails in a given format.
FxpValue hr_rail(QFormat f);
FxpValue lr_rail(QFormat f);

struct StagePlan {
    int hyperbolic_stages = 4;
    int linear_stages = 5;
    int precision = 16;
    HypSchedule schedule = HypSchedule::repeated;

    friend bool operator==(const StagePlan&, const StagePlan&) = default;
};

StagePlan default_stage_plan(int precision);
void validate(const StagePlan& p);
std::string to_string(HypSchedule s);
HypSchedule parse_schedule(const std::string& s);

}  // namespace flexpe
