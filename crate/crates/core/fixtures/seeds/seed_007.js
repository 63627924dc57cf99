let url = decodeURI("zed%20uv");
print(url.length, url.charAt(1));
