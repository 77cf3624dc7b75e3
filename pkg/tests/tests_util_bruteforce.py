"""Brute-force reference implementations shared by test modules."""



def bruteforce_tiles(mx, my, radius, grid):
    """Tile assignment oracle: test every (splat, tile) rectangle pair."""
    out = [[] for _ in range(grid.n_tiles)]
    t = grid.tile_px
    for i in range(len(mx)):
        lo_x, hi_x = mx[i] - radius[i], mx[i] + radius[i]
        lo_y, hi_y = my[i] - radius[i], my[i] + radius[i]
        for ty in range(grid.tiles_y):
            for tx in range(grid.tiles_x):
                x0, y0 = tx * t, ty * t
                if hi_x >= x0 and lo_x < x0 + t and hi_y >= y0 and lo_y < y0 + t:
                    out[ty * grid.tiles_x + tx].append(i)
    return out
