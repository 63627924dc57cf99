let url = decodeURI("zed%20qq");
print(url.length, url.charAt(1));
