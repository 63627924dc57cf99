let url = decodeURI("hi%20qq");
print(url.length, url.charAt(1));
