const words = ["zed", "uv"];
let joined = words.join("-");
let pos = joined.indexOf("-");
print(joined.charAt(pos + 1));
