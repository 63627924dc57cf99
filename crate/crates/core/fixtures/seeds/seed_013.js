let grid = [[5, 11], [3, 1]];
let r = 0;
while (r < grid.length) {
  let row = grid[r];
  print(row.join(" "));
  r += 1;
}
