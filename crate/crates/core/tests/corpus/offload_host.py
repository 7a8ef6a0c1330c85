from random import randint
from epython import send, recv

data=[]
count=0
while count < 5000:
  data.append(randint(0,1000))
  count+=1

send(len(data), 0)
send(data, 0, len(data))
data=recv(0, len(data))

count=0
while count < 5000:
  print data[count]
  count+=1
