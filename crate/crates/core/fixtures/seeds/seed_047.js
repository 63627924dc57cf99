let url = decodeURI("bar%20io");
print(url.length, url.charAt(1));
