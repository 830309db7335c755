#include <string>

#include "mitodet/eval/eval.hpp"

namespace mitodet::eval {

namespace {

std::vector<int> axis_offsets(int size, int patch, int stride) {
    std::vector<int> out;
    for (int x = 0;; x += stride) {
        if (x + patch >= size) {
            out.push_back(size - patch);
            break;
        }
        out.push_back(x);
    }
    return out;
}

}  // namespace

std::vector<TileOffset> tile_slide(int slide_w, int slide_h, int patch_size,
                                   int overlap) {
    if (patch_size > slide_w || patch_size > slide_h) {
        throw TileError("tile_slide: patch " + std::to_string(patch_size) +
                        " larger than slide " + std::to_string(slide_w) + "x" +
                        std::to_string(slide_h));
    }
    if (overlap < 0 || overlap >= patch_size) {
        throw TileError("tile_slide: overlap " + std::to_string(overlap) +
                        " must be in [0, patch_size)");
    }
    const int stride = patch_size - overlap;
    const auto xs = axis_offsets(slide_w, patch_size, stride);
    const auto ys = axis_offsets(slide_h, patch_size, stride);
    std::vector<TileOffset> tiles;
    tiles.reserve(xs.size() * ys.size());
    for (int y : ys) {
        for (int x : xs) tiles.push_back({x, y});
    }
    return tiles;
}

}  // namespace mitodet::eval
