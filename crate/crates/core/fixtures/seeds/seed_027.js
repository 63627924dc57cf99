let url = decodeURI("zed%20moon");
print(url.length, url.charAt(1));
