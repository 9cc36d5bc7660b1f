#ifndef MVSIS_VISUAL_HPP
#define MVSIS_VISUAL_HPP

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "mvsis/errors.hpp"
#include "mvsis/model.hpp"

namespace mvsis {

/// Plot encoding of one agent. Colour channels are the infection mix
/// (virus 1 red, virus 2 blue, virus 3 green); black means healthy.
struct AgentGlyph {
    std::optional<std::array<double, 3>> rgb;
    double diameter = 0.0;
};

/// Per-agent glyphs for `state`: diameter d0 + (sum_k p(k, i)) * r0 and,
/// when `with_color`, the normalised mixture of the three viruses.
inline std::vector<AgentGlyph> plot_columns(const InfectionState& state, double d0, double r0, bool with_color = true)
{
    const std::size_t m = state.virus_count();
    if (with_color && m != 3)
        throw PreconditionError("plot_columns: colour encoding needs exactly 3 viruses (got " + std::to_string(m) +
                                "); export diameters only");
    std::vector<AgentGlyph> out(state.agents());
    for (std::size_t i = 0; i < state.agents(); ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < m; ++k)
            total += state.p(k, i);
        out[i].diameter = d0 + total * r0;
        if (with_color) {
            std::array<double, 3> c{0.0, 0.0, 0.0};
            if (total > 0.0) {
                // (red, green, blue) channels; virus 2 is drawn blue, virus 3 green.
                c[0] = state.p(0, i) / total;
                c[1] = state.p(2, i) / total;
                c[2] = state.p(1, i) / total;
            }
            out[i].rgb = c;
        }
    }
    return out;
}

}  // namespace mvsis

#endif  // MVSIS_VISUAL_HPP
